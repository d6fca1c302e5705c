//! Concept possession from correctness scores.
//!
//! A concept counts as *not* possessed only when both correctness signals fall
//! below their thresholds: `xc < xc_threshold` and `wc < wc_threshold`.
//! Reaching either threshold (inclusive) is enough for possession.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PossessionThresholds {
    pub xc: f64,
    /// Raw `[-1, 1]` scale; 0.25 corresponds to 25 in ×100 tables.
    pub wc: f64,
    /// Require both thresholds instead of either.
    #[serde(default)]
    pub require_both: bool,
}

impl Default for PossessionThresholds {
    fn default() -> Self {
        Self {
            xc: 0.5,
            wc: 0.25,
            require_both: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PossessionStatus {
    pub possessed: bool,
    pub xc_threshold: f64,
    pub wc_threshold: f64,
}

/// Classify one (concept, language) score pair. A missing `xc` only counts as
/// failing the Xc threshold.
pub fn classify_possession(
    xc: Option<f64>,
    wc: f64,
    t: &PossessionThresholds,
) -> PossessionStatus {
    let xc_ok = xc.is_some_and(|x| x >= t.xc);
    let wc_ok = wc >= t.wc;
    let possessed = if t.require_both {
        xc_ok && wc_ok
    } else {
        xc_ok || wc_ok
    };
    PossessionStatus {
        possessed,
        xc_threshold: t.xc,
        wc_threshold: t.wc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn possessed(xc: f64, wc100: i32) -> bool {
        classify_possession(Some(xc), f64::from(wc100) / 100.0, &Default::default()).possessed
    }

    #[test]
    fn reference_examples() {
        assert!(possessed(0.704, 26));
        assert!(!possessed(0.346, 18));
        assert!(!possessed(0.298, 19));
    }

    #[test]
    fn boundary_is_possessed() {
        assert!(possessed(0.5, 25));
        assert!(possessed(0.5, 0));
        assert!(possessed(0.0, 25));
        assert!(!possessed(0.4999, 24));
    }

    #[test]
    fn missing_xc_falls_back_to_wc() {
        let t = PossessionThresholds::default();
        assert!(classify_possession(None, 0.3, &t).possessed);
        assert!(!classify_possession(None, 0.2, &t).possessed);
    }

    #[test]
    fn strict_mode_needs_both() {
        let t = PossessionThresholds {
            require_both: true,
            ..Default::default()
        };
        assert!(!classify_possession(Some(0.639), 0.23, &t).possessed);
        assert!(classify_possession(Some(0.5), 0.25, &t).possessed);
    }
}
