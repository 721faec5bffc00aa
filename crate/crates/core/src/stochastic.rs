//! Monte Carlo checks of the mean-square bounds for fBm-driven expansions
//! (no drift, Hurst parameter `H ∈ (1/2, 1)`).

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::exec;
use crate::fraccalc::{lambda_alpha, FracParams};
use crate::paths::{holder_sup_norm, Components, FbmSampler, FbmSpec};
use crate::special::{ln_factorial, ln_gamma, log_add, KahanSum};
use crate::taylor::iterated_integrals;
use crate::word::Word;

/// Replicate count below which confidence intervals are reported with a warning.
pub const MIN_REPLICATES: usize = 100;

const LN_REL_CUTOFF: f64 = -690.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicates: usize,
    /// Template; replicate `r` uses seed `fbm.seed + r`.
    pub fbm: FbmSpec,
    pub words: Vec<Word>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.99
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.fbm.validate()?;
        if self.replicates < 2 {
            return Err(Error::domain(
                "at least two replicates are needed for a variance",
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::domain(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if self.words.is_empty() {
            return Err(Error::domain("no words requested"));
        }
        for w in &self.words {
            if w.letters().contains(&0) {
                return Err(Error::domain(format!("word {w} uses the drift letter 0")));
            }
            w.check_alphabet(self.fbm.dimension)?;
        }
        Ok(())
    }
}

/// `K² = 2 / (H(2H − 1))`.
fn k_squared(hurst: f64) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(Error::domain(format!(
            "hurst must lie in (1/2, 1), got {hurst}"
        )));
    }
    Ok(2.0 / (hurst * (2.0 * hurst - 1.0)))
}

/// `K^{2m}/m! · t^{2Hm}`.
pub fn l2_bound(m: usize, t: f64, hurst: f64) -> Result<f64> {
    let k2 = k_squared(hurst)?;
    if m == 0 {
        return Err(Error::domain("word length must be at least 1"));
    }
    if !(t > 0.0) {
        return Err(Error::domain("t must be positive"));
    }
    let mf = m as f64;
    Ok((mf * k2.ln() - ln_factorial(m) + 2.0 * hurst * mf * t.ln()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Row {
    pub word: Word,
    pub m: usize,
    /// Empirical `E|∫ dB^I|²`.
    pub empirical: f64,
    pub std_error: f64,
    pub ci_halfwidth: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub t: f64,
    pub hurst: f64,
    pub replicates: usize,
    pub confidence: f64,
    pub rows: Vec<L2Row>,
}

impl L2Report {
    /// CSV `word,m,empirical,ci_halfwidth,bound,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "word,m,empirical,ci_halfwidth,bound,pass")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.word,
                r.m,
                fmt_f64(r.empirical),
                fmt_f64(r.ci_halfwidth),
                fmt_f64(r.bound),
                r.pass
            )?;
        }
        Ok(())
    }
}

/// `∫_{Δ^{|I|}[0,T]} dB^I` for every word, one row per replicate.
pub fn replicate_integrals(config: &McConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let sampler = FbmSampler::new(&config.fbm)?;
    let dim = config.fbm.dimension;
    exec::map_range(config.replicates, |r| {
        let path = sampler.sample(dim, config.fbm.seed.wrapping_add(r as u64))?;
        Ok(iterated_integrals(&path, &config.words)?
            .into_iter()
            .map(|s| *s.last().unwrap())
            .collect())
    })
    .into_iter()
    .collect()
}

/// Empirical mean squares with normal-approximation intervals.
pub fn mc_l2(config: &McConfig) -> Result<L2Report> {
    let values = replicate_integrals(config)?;
    if config.replicates < MIN_REPLICATES {
        log::warn!(
            "only {} replicates; intervals below {MIN_REPLICATES} replicates are unreliable",
            config.replicates
        );
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + config.confidence));
    let t = config.fbm.horizon;
    let reps = config.replicates as f64;
    let rows = config
        .words
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let mean = values
                .iter()
                .map(|v| v[j] * v[j])
                .collect::<KahanSum>()
                .value()
                / reps;
            let var = values
                .iter()
                .map(|v| (v[j] * v[j] - mean).powi(2))
                .collect::<KahanSum>()
                .value()
                / (reps - 1.0);
            let se = (var / reps).sqrt();
            let bound = l2_bound(w.len(), t, config.fbm.hurst)?;
            Ok(L2Row {
                word: w.clone(),
                m: w.len(),
                empirical: mean,
                std_error: se,
                ci_halfwidth: z * se,
                bound,
                pass: mean + z * se <= bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(L2Report {
        t,
        hurst: config.fbm.hurst,
        replicates: config.replicates,
        confidence: config.confidence,
        rows,
    })
}

/// `ln Σ_{k ≥ start} exp(ln_term(k))`, stopping once terms decrease and are negligible.
fn ln_series<F: Fn(usize) -> f64>(start: usize, ln_term: F) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    let mut prev = f64::INFINITY;
    let mut k = start;
    loop {
        let lt = ln_term(k);
        acc = log_add(acc, lt);
        if lt == f64::NEG_INFINITY || (lt < prev && lt - acc < LN_REL_CUTOFF) {
            return acc;
        }
        prev = lt;
        k += 1;
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::domain(format!(
            "gamma must lie in [0, 1/2), got {gamma}"
        )));
    }
    Ok(())
}

/// `Φ_γ(x) = Σ_{k≥0} x^k / (k!)^{1/2−γ}`.
pub fn phi_gamma(x: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::domain(format!(
            "x must be finite and nonnegative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let p = 0.5 - gamma;
    Ok(ln_series(0, |k| k as f64 * x.ln() - p * ln_factorial(k)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbRemainder {
    /// `Σ_{k>N} (d K M t^H)^k / (k!)^{1/2−γ}`.
    pub direct: f64,
    /// `(d K M t^{2H})^{N+1} / ((N+1)!)^{1/2−γ} · Φ_γ(d K M t^{2H})`, unit constant.
    pub displayed: f64,
}

/// Mean-square remainder bound for drift-free fBm equations with
/// `‖P_I‖ ≤ M^{|I|} (|I|!)^γ`.
pub fn probabilistic_remainder(
    n: usize,
    t: f64,
    hurst: f64,
    m: f64,
    gamma: f64,
    d: usize,
) -> Result<ProbRemainder> {
    check_gamma(gamma)?;
    let k2 = k_squared(hurst)?;
    if !(t > 0.0) {
        return Err(Error::domain("t must be positive"));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::domain(format!(
            "M must be finite and nonnegative, got {m}"
        )));
    }
    if m == 0.0 || d == 0 {
        return Ok(ProbRemainder {
            direct: 0.0,
            displayed: 0.0,
        });
    }
    let p = 0.5 - gamma;
    let k = k2.sqrt();
    let base = d as f64 * k * m;
    let ln_x = (base * t.powf(hurst)).ln();
    let direct = ln_series(n + 1, |j| j as f64 * ln_x - p * ln_factorial(j)).exp();
    let y = base * t.powf(2.0 * hurst);
    let n1 = (n + 1) as f64;
    let displayed = (n1 * y.ln() - p * ln_gamma(n1 + 1.0)).exp() * phi_gamma(y, gamma)?;
    Ok(ProbRemainder { direct, displayed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_y_norm: f64,
    pub max_y_norm: f64,
    pub mean_lambda: f64,
    pub max_lambda: f64,
}

/// Sample statistics of `‖B‖_{α,T,∞}` and `Λ_α(T, B)` over replicates.
pub fn pathwise_norm_stats(spec: &FbmSpec, replicates: usize, alpha: f64) -> Result<NormStats> {
    if replicates == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    let sampler = FbmSampler::new(spec)?;
    let params = FracParams::new(alpha, spec.horizon)?.with_components(Components::Drivers);
    let pairs = exec::map_range(replicates, |r| {
        let path = sampler.sample(spec.dimension, spec.seed.wrapping_add(r as u64))?;
        params.check_pairing(path.beta_hint())?;
        Ok((
            holder_sup_norm(&path, alpha, spec.horizon, Components::Drivers)?,
            lambda_alpha(&path, &params)?,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = replicates as f64;
    Ok(NormStats {
        mean_y_norm: pairs.iter().map(|p| p.0).collect::<KahanSum>().value() / n,
        max_y_norm: pairs.iter().map(|p| p.0).fold(0.0, f64::max),
        mean_lambda: pairs.iter().map(|p| p.1).collect::<KahanSum>().value() / n,
        max_lambda: pairs.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}
