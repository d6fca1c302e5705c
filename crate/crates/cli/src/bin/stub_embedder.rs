//! Deterministic stand-in for the vision-language embedder.
//!
//! `images --manifest P --out D` writes one file per (concept, language) at
//! `D/<lang>/<concept>.emb` and prints each path. Features are the 4×4 RGB
//! thumbnail, mean-centred and L2-normalised.
//!
//! `texts --concepts P --lang L --out F` writes one hash-derived unit vector
//! per concept, keyed by concept id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use coverage_core::concepts::ConceptList;
use coverage_core::generation::RunManifest;
use coverage_core::lang::Lang;
use coverage_core::store::{
    normalize_in_place, write_embeddings, write_text_embeddings, EmbeddingSet, ImageKey,
    TextEmbeddingSet, Vectors,
};

const GRID: u32 = 4;
const DIM: usize = (GRID * GRID * 3) as usize;

#[derive(Parser)]
#[command(name = "coverage-stub-embedder")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    Images {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Texts {
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long)]
        lang: Lang,
        #[arg(long)]
        out: PathBuf,
    },
}

fn unit_or_axis(mut v: Vec<f32>) -> Vec<f32> {
    if !normalize_in_place(&mut v) {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    }
    v
}

fn image_features(bytes: &[u8]) -> Result<Vec<f32>> {
    let img = image::load_from_memory(bytes)?
        .resize_exact(GRID, GRID, image::imageops::FilterType::Triangle)
        .to_rgb8();
    let raw: Vec<f64> = img.pixels().flat_map(|p| p.0).map(f64::from).collect();
    // exact for uniform images, so flat inputs reach the axis fallback
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(unit_or_axis(raw.iter().map(|x| (x - mean) as f32).collect()))
}

fn text_features(text: &str) -> Vec<f32> {
    let mut v = Vec::with_capacity(DIM);
    let mut block = 0u32;
    while v.len() < DIM {
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        h.update(block.to_le_bytes());
        v.extend(h.finalize().iter().map(|b| f32::from(*b) / 127.5 - 1.0));
        block += 1;
    }
    v.truncate(DIM);
    unit_or_axis(v)
}

fn images(manifest: &Path, out: &Path) -> Result<bool> {
    let m = RunManifest::read(manifest)?;
    let run = manifest.parent().map(PathBuf::from).unwrap_or_default();
    let mut groups: BTreeMap<(Lang, String), (Vec<ImageKey>, Vec<f32>)> = BTreeMap::new();
    let mut clean = true;
    for e in m.ok_entries() {
        let Some(rel) = &e.image_path else { continue };
        let path = run.join(rel);
        let feats = std::fs::read(&path)
            .map_err(anyhow::Error::from)
            .and_then(|b| image_features(&b));
        match feats {
            Ok(f) => {
                let g = groups.entry((e.language.clone(), e.concept_id.clone())).or_default();
                g.0.push(e.image_key());
                g.1.extend(f);
            }
            Err(err) => {
                eprintln!("skipping {}: {err:#}", path.display());
                clean = false;
            }
        }
    }
    for ((lang, concept), (keys, data)) in groups {
        let set = EmbeddingSet::new(Vectors::new(DIM, data)?, keys)?;
        let path = out.join(lang.as_str()).join(format!("{concept}.emb"));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        write_embeddings(&set, &path)?;
        println!("{}", path.display());
    }
    Ok(clean)
}

fn texts(concepts: &Path, lang: &Lang, out: &Path) -> Result<()> {
    let list = ConceptList::read_tsv(concepts)?;
    let mut keys = Vec::new();
    let mut data = Vec::new();
    for row in &list.rows {
        let surface = row
            .surface(lang)
            .with_context(|| format!("concept {} has no {lang} surface", row.concept_id))?;
        keys.push(row.concept_id.clone());
        data.extend(text_features(surface));
    }
    let set = TextEmbeddingSet::new(Vectors::new(DIM, data)?, keys)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_text_embeddings(&set, out)?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Images { manifest, out } => images(manifest, out),
        Cmd::Texts { concepts, lang, out } => texts(concepts, lang, out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_vectors_are_unit_and_stable() {
        let a = text_features("dog");
        assert_eq!(a.len(), DIM);
        assert_eq!(a, text_features("dog"));
        let n: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((n - 1.0).abs() < 1e-5);
    }

    #[test]
    fn flat_image_maps_to_axis() {
        let img = image::RgbImage::from_pixel(8, 8, image::Rgb([9, 9, 9]));
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png).unwrap();
        let f = image_features(&png).unwrap();
        assert_eq!(f[0], 1.0);
    }
}
