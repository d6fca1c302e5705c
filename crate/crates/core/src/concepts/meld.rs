//! Combining the ensemble's answers into one aligned row.
//!
//! Services are ordered by how many benchmark languages they returned
//! (descending), ties broken by configured priority. The first service is the
//! base. Each language the base lacks is filled from the other service that
//! agrees with the base on the most shared languages (case-folded exact
//! match), ties again broken by priority. The source language always takes
//! the source term itself.

use std::collections::BTreeMap;

use super::translate::TranslationCandidates;
use super::PROVENANCE_SOURCE;
use crate::lang::{fold, Lang};

#[derive(Debug, Clone)]
pub struct Melder {
    pub languages: Vec<Lang>,
    pub source_language: Lang,
    /// Service ids, most trusted first. Unlisted services rank after listed
    /// ones, alphabetically.
    pub priority: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Melded {
    pub surfaces: BTreeMap<Lang, String>,
    pub provenance: BTreeMap<Lang, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeldOutcome {
    Melded(Melded),
    /// At least one benchmark language had no candidate from any service.
    Discard { missing: Vec<Lang> },
}

impl Melder {
    fn priority_of(&self, id: &str) -> (usize, String) {
        let idx = self
            .priority
            .iter()
            .position(|p| p == id)
            .unwrap_or(self.priority.len());
        (idx, id.to_string())
    }

    fn agreement(base: &BTreeMap<Lang, String>, other: &BTreeMap<Lang, String>) -> usize {
        base.iter()
            .filter(|(l, s)| other.get(*l).is_some_and(|o| fold(o) == fold(s)))
            .count()
    }

    pub fn meld(&self, c: &TranslationCandidates) -> MeldOutcome {
        let mut order: Vec<(&String, &BTreeMap<Lang, String>)> = c.per_service.iter().collect();
        order.sort_by(|(a, am), (b, bm)| {
            let ac = c.service_language_counts.get(*a).copied().unwrap_or(am.len());
            let bc = c.service_language_counts.get(*b).copied().unwrap_or(bm.len());
            bc.cmp(&ac)
                .then_with(|| self.priority_of(a).cmp(&self.priority_of(b)))
        });

        let mut surfaces = BTreeMap::new();
        let mut provenance = BTreeMap::new();
        let source_lang = &self.source_language;
        surfaces.insert(source_lang.clone(), c.source_term.clone());
        provenance.insert(source_lang.clone(), PROVENANCE_SOURCE.to_string());

        let Some(((base_id, base), rest)) = order.split_first() else {
            return self.finish(surfaces, provenance);
        };
        for lang in &self.languages {
            if lang == source_lang {
                continue;
            }
            if let Some(s) = base.get(lang) {
                surfaces.insert(lang.clone(), s.clone());
                provenance.insert(lang.clone(), (*base_id).clone());
            }
        }

        for lang in &self.languages {
            if surfaces.contains_key(lang) {
                continue;
            }
            let best = rest
                .iter()
                .filter_map(|(id, m)| m.get(lang).map(|s| (*id, *m, s)))
                .min_by(|(a_id, a_map, _), (b_id, b_map, _)| {
                    Self::agreement(base, b_map)
                        .cmp(&Self::agreement(base, a_map))
                        .then_with(|| self.priority_of(a_id).cmp(&self.priority_of(b_id)))
                });
            if let Some((id, _, s)) = best {
                surfaces.insert(lang.clone(), s.clone());
                provenance.insert(lang.clone(), id.clone());
            }
        }
        self.finish(surfaces, provenance)
    }

    fn finish(
        &self,
        mut surfaces: BTreeMap<Lang, String>,
        mut provenance: BTreeMap<Lang, String>,
    ) -> MeldOutcome {
        let missing: Vec<Lang> = self
            .languages
            .iter()
            .filter(|l| !surfaces.contains_key(*l))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return MeldOutcome::Discard { missing };
        }
        surfaces.retain(|l, _| self.languages.contains(l));
        provenance.retain(|l, _| self.languages.contains(l));
        MeldOutcome::Melded(Melded {
            surfaces,
            provenance,
        })
    }
}

pub fn meld_translations(c: &TranslationCandidates, melder: &Melder) -> MeldOutcome {
    melder.meld(c)
}
