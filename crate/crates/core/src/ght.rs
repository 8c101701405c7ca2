//! Automatic histogram threshold selection.
//!
//! Implements the generalized histogram-thresholding family that unifies
//! Otsu's method and minimum-error thresholding under four hyperparameters
//! (nu, tau, kappa, omega). The default configuration is the exact Otsu
//! limit (nu = inf, tau = 0): minimizing the within-class scatter, which is
//! computed here with exact integer arithmetic so the selected bin is
//! reproducible bit-for-bit against any between-class-variance formulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for histogram threshold selection.
///
/// `nu` blends the measured class variances toward `tau^2` (`nu = inf` pins
/// them, which together with `tau = 0` reduces the criterion to Otsu's);
/// `kappa`/`omega` add a prior on the class proportions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GhtConfig {
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    #[serde(default = "default_nu", with = "serde_nonneg_or_inf")]
    pub nu: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
}

fn default_n_bins() -> usize {
    256
}

fn default_nu() -> f64 {
    f64::INFINITY
}

fn default_omega() -> f64 {
    0.5
}

impl Default for GhtConfig {
    fn default() -> Self {
        GhtConfig {
            n_bins: 256,
            nu: f64::INFINITY,
            tau: 0.0,
            kappa: 0.0,
            omega: 0.5,
        }
    }
}

impl GhtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidInput(format!(
                "n_bins must be at least 2, got {}",
                self.n_bins
            )));
        }
        for (name, v) in [
            ("nu", self.nu),
            ("tau", self.tau),
            ("kappa", self.kappa),
            ("omega", self.omega),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.omega > 1.0 {
            return Err(Error::InvalidInput(format!(
                "omega must lie in [0,1], got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// True for the exact Otsu limiting case.
    pub fn is_otsu_limit(&self) -> bool {
        self.nu.is_infinite() && self.tau == 0.0
    }
}

/// JSON cannot encode f64 infinity; accept/emit the string "inf" for it.
mod serde_nonneg_or_inf {
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a non-negative number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" | "infinity" | "Infinity" => Ok(f64::INFINITY),
                    _ => Err(E::custom(format!("expected a number or \"inf\", got {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Selects the split index `t` (threshold boundary lies after bin `t`) that
/// optimizes the configured criterion over bin positions `0..counts.len()`.
///
/// Returns `None` when fewer than two bins carry mass, in which case no split
/// separates anything. Ties resolve to the lowest split index.
pub fn ght_split(counts: &[u64], cfg: &GhtConfig) -> Option<usize> {
    let nonzero = counts.iter().filter(|&&c| c > 0).count();
    if counts.len() < 2 || nonzero < 2 {
        return None;
    }
    if cfg.is_otsu_limit() {
        otsu_limit_split(counts)
    } else {
        general_split(counts, cfg)
    }
}

/// Otsu limit: minimize within-class scatter d0 + d1, equivalently maximize
/// S0^2/w0 + S1^2/w1 (S = sum of count*position, w = total count). Computed
/// with exact integer cross-multiplication; falls back to f64 only if the
/// 128-bit products overflow (histograms beyond ~4 million samples).
fn otsu_limit_split(counts: &[u64]) -> Option<usize> {
    let n = counts.len();
    let total_w: u128 = counts.iter().map(|&c| c as u128).sum();
    let total_s: u128 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as u128 * i as u128)
        .sum();

    let mut best: Option<(usize, (u128, u128))> = None;
    let mut w0: u128 = 0;
    let mut s0: u128 = 0;
    for (t, &c) in counts.iter().take(n - 1).enumerate() {
        w0 += c as u128;
        s0 += c as u128 * t as u128;
        let w1 = total_w - w0;
        let s1 = total_s - s0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        // Criterion value as an exact fraction num/den.
        let num = s0 * s0 * w1 + s1 * s1 * w0;
        let den = w0 * w1;
        match &best {
            None => best = Some((t, (num, den))),
            Some((_, (bn, bd))) => {
                if fraction_greater((num, den), (*bn, *bd)) {
                    best = Some((t, (num, den)));
                }
            }
        }
    }
    best.map(|(t, _)| t)
}

/// Exact a/b > c/d for non-negative fractions with positive denominators.
fn fraction_greater(a: (u128, u128), b: (u128, u128)) -> bool {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(lhs), Some(rhs)) => lhs > rhs,
        _ => (a.0 as f64 / a.1 as f64) > (b.0 as f64 / b.1 as f64),
    }
}

/// General criterion with finite hyperparameters, evaluated in f64 over bin
/// positions. Maximizes
///   f0 + f1, with f_k = -d_k/v_k - w_k ln v_k + 2 (w_k + kappa w_k^prior) ln w_k
/// where v_k is the measured class scatter blended toward tau^2 by nu.
fn general_split(counts: &[u64], cfg: &GhtConfig) -> Option<usize> {
    let n = counts.len();
    let total_w: f64 = counts.iter().map(|&c| c as f64).sum();
    let clip = |v: f64| v.max(1e-30);

    let mut w0 = 0.0f64;
    let mut s0 = 0.0f64;
    let mut q0 = 0.0f64;
    let total_s: f64 = counts.iter().enumerate().map(|(i, &c)| c as f64 * i as f64).sum();
    let total_q: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (i * i) as f64)
        .sum();

    let mut best: Option<(usize, f64)> = None;
    for (t, &count) in counts.iter().take(n - 1).enumerate() {
        let c = count as f64;
        w0 += c;
        s0 += c * t as f64;
        q0 += c * (t * t) as f64;
        let w1 = total_w - w0;
        let s1 = total_s - s0;
        let q1 = total_q - q0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let p0 = w0 / total_w;
        let p1 = w1 / total_w;
        let d0 = (q0 - s0 * s0 / w0).max(0.0);
        let d1 = (q1 - s1 * s1 / w1).max(0.0);
        let (v0, v1) = if cfg.nu.is_infinite() {
            (clip(cfg.tau * cfg.tau), clip(cfg.tau * cfg.tau))
        } else {
            (
                clip((p0 * cfg.nu * cfg.tau * cfg.tau + d0) / (p0 * cfg.nu + w0)),
                clip((p1 * cfg.nu * cfg.tau * cfg.tau + d1) / (p1 * cfg.nu + w1)),
            )
        };
        let f0 = -d0 / v0 - w0 * v0.ln() + 2.0 * (w0 + cfg.kappa * cfg.omega) * w0.ln();
        let f1 = -d1 / v1 - w1 * v1.ln() + 2.0 * (w1 + cfg.kappa * (1.0 - cfg.omega)) * w1.ln();
        let score = f0 + f1;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| t)
}
