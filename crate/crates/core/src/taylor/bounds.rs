//! Deterministic remainder bound and the convergence window `T_C(r)`.
//!
//! Every quantity is summed in log space. With `c = 1 − 2α` the `k`-th tail term is
//!
//! `(aM)^k s_γ(k) (Λ C)^{k−1} ‖y‖ Γ(c) / Γ(kc)`
//!
//! where `a` is the number of active letters (`d + 1` with a drift). It bounds
//! `‖g_k(t)‖` through the growth of `P_I` and the bound on iterated integrals.

use std::io::Write;

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::fraccalc::{c_alpha, lambda_alpha_profile, FracParams};
use crate::jets::GrowthScale;
use crate::paths::{holder_sup_norm, holder_sup_norm_profile, Components, PathGrid};
use crate::special::{ln_gamma, log_add};

use super::levels::ExpansionLevel;

/// Terms summed past `N` before a tail is declared divergent.
pub const DEFAULT_TAIL_HORIZON: usize = 1_000_000;

/// Relative size (natural log) below which a decreasing term ends the sum.
const LN_REL_CUTOFF: f64 = -690.8; // ln 1e-300

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    pub gamma: f64,
    pub m: f64,
    pub r: f64,
    /// Analyticity radius; `f64::INFINITY` for entire fields.
    pub c: f64,
    /// Number of drivers, without the clock.
    pub d: usize,
    pub scale: GrowthScale,
    /// Whether the clock letter 0 carries a nonzero drift. Without it the
    /// alphabet has `d` letters and the path norms should cover the drivers only.
    pub clock: bool,
}

impl BoundParams {
    pub fn new(alpha: f64, gamma: f64, m: f64, r: f64, c: f64, d: usize) -> Result<Self> {
        let p = BoundParams {
            alpha,
            gamma,
            m,
            r,
            c,
            d,
            scale: GrowthScale::Gamma,
            clock: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_scale(mut self, scale: GrowthScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_clock(mut self, clock: bool) -> Self {
        self.clock = clock;
        self
    }

    /// Number of active letters, `d + 1` with the clock and `d` without.
    pub fn alphabet(&self) -> usize {
        self.d + usize::from(self.clock)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && 1.0 - 2.0 * self.alpha - self.gamma > 0.0) {
            return Err(Error::domain(format!(
                "gamma must lie in [0, 1 - 2 alpha) = [0, {}), got {}",
                1.0 - 2.0 * self.alpha,
                self.gamma
            )));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::domain(format!(
                "M must be finite and nonnegative, got {}",
                self.m
            )));
        }
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(Error::domain(format!(
                "r must be finite and > 1, got {}",
                self.r
            )));
        }
        if self.alphabet() == 0 {
            return Err(Error::domain(
                "the alphabet is empty: no drivers and no clock",
            ));
        }
        if !(self.c > 0.0) {
            return Err(Error::domain(format!("C must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// `1 − 2α − γ`.
    pub fn margin(&self) -> f64 {
        1.0 - 2.0 * self.alpha - self.gamma
    }
}

/// `(Λ_α(t, y), C_α(t), ‖y‖_{α,t,∞})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNorms {
    pub lambda: f64,
    pub c_alpha: f64,
    pub y_norm: f64,
}

impl PathNorms {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("c_alpha", self.c_alpha),
            ("y_norm", self.y_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Path norms on `[0, t_end]`; at `t_end = 0` only `‖y(0)‖` survives.
pub fn path_norms(path: &PathGrid, alpha: f64, t_end: f64, comps: Components) -> Result<PathNorms> {
    let last = path.last_index_at_or_before(t_end)?;
    let y_norm = holder_sup_norm(path, alpha, path.times()[last], comps)?;
    if last == 0 {
        FracParams::new(alpha, path.horizon())?;
        return Ok(PathNorms {
            lambda: 0.0,
            c_alpha: 0.0,
            y_norm,
        });
    }
    let t = path.times()[last];
    let lambda =
        crate::fraccalc::lambda_alpha(path, &FracParams::new(alpha, t)?.with_components(comps))?;
    Ok(PathNorms {
        lambda,
        c_alpha: c_alpha(t, alpha)?,
        y_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderBound {
    /// Direct tail sum `Σ_{k>N}` (may be `+inf` when it overflows `f64`).
    pub direct: f64,
    pub ln_direct: f64,
    /// Closed-form majorant; `None` for the factorial-power scale.
    pub closed_form: Option<f64>,
    pub ln_closed_form: Option<f64>,
    /// Number of terms summed.
    pub terms: usize,
}

fn is_zero_tail(params: &BoundParams, norms: &PathNorms) -> bool {
    params.m == 0.0 || norms.lambda == 0.0 || norms.c_alpha == 0.0 || norms.y_norm == 0.0
}

fn ln_direct_tail(
    params: &BoundParams,
    norms: &PathNorms,
    n: usize,
    horizon: usize,
) -> Result<(f64, usize)> {
    let c = 1.0 - 2.0 * params.alpha;
    let dm = params.alphabet() as f64 * params.m;
    let ln_pref = dm.ln() + norms.y_norm.ln() + ln_gamma(c);
    let ln_x = (dm * norms.lambda * norms.c_alpha).ln();
    let mut acc = f64::NEG_INFINITY;
    let mut prev = f64::INFINITY;
    for step in 1..=horizon {
        let k = n + step;
        let kf = k as f64;
        let lt =
            ln_pref + (kf - 1.0) * ln_x + params.scale.ln_scale(params.gamma, k) - ln_gamma(kf * c);
        acc = log_add(acc, lt);
        let past_min = params.gamma == 0.0 || params.gamma * kf >= 2.0;
        if lt < prev && lt - acc < LN_REL_CUTOFF && past_min {
            return Ok((acc, step));
        }
        prev = lt;
    }
    Err(Error::DivergentTail { terms: horizon })
}

fn ln_closed_form(params: &BoundParams, norms: &PathNorms, n: usize) -> f64 {
    let c = params.margin();
    let ln_beta = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let mut ln_k = ln_beta(c, c) + 4f64.ln() + 2.0 - c.ln();
    if params.gamma > 0.0 {
        ln_k += ln_beta(params.gamma, c);
    }
    let dm = params.alphabet() as f64 * params.m;
    let x = dm * norms.lambda * norms.c_alpha;
    ln_k + dm.ln()
        + norms.y_norm.ln()
        + ln_gamma(1.0 - 2.0 * params.alpha)
        + n as f64 * x.ln()
        + 2.0 * x.powf(1.0 / c)
        - ln_gamma(c * n as f64)
}

pub fn remainder_bound(
    params: &BoundParams,
    norms: &PathNorms,
    n: usize,
) -> Result<RemainderBound> {
    remainder_bound_with(params, norms, n, DEFAULT_TAIL_HORIZON)
}

/// Tail bound for `‖X_t − x0 − Σ_{k≤N} g_k(t)‖`.
pub fn remainder_bound_with(
    params: &BoundParams,
    norms: &PathNorms,
    n: usize,
    horizon: usize,
) -> Result<RemainderBound> {
    params.validate()?;
    norms.validate()?;
    if n == 0 {
        return Err(Error::domain("truncation order N must be at least 1"));
    }
    let closed = |ln: Option<f64>| (ln, ln.map(f64::exp));
    if is_zero_tail(params, norms) {
        let (ln_cf, cf) = closed((params.scale == GrowthScale::Gamma).then_some(f64::NEG_INFINITY));
        return Ok(RemainderBound {
            direct: 0.0,
            ln_direct: f64::NEG_INFINITY,
            closed_form: cf,
            ln_closed_form: ln_cf,
            terms: 0,
        });
    }
    let (ln_direct, terms) = ln_direct_tail(params, norms, n, horizon)?;
    let (ln_cf, cf) =
        closed((params.scale == GrowthScale::Gamma).then(|| ln_closed_form(params, norms, n)));
    Ok(RemainderBound {
        direct: ln_direct.exp(),
        ln_direct,
        closed_form: cf,
        ln_closed_form: ln_cf,
        terms,
    })
}

/// Bound trace as CSV with header `N,bound`.
pub fn write_bound_csv<W: Write>(rows: &[(usize, f64)], mut w: W) -> Result<()> {
    writeln!(w, "N,bound")?;
    for (n, b) in rows {
        writeln!(w, "{n},{}", fmt_f64(*b))?;
    }
    Ok(())
}

/// How `detect_tc` accounts for levels beyond the computed ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TailMode {
    /// Partial sums over the computed levels only.
    #[default]
    None,
    /// Adds the remainder bound with `M → rM`, using per-node norm profiles.
    Bound { lambda: Vec<f64>, y_norm: Vec<f64> },
}

impl TailMode {
    pub fn from_path(path: &PathGrid, alpha: f64, comps: Components) -> Result<Self> {
        Ok(TailMode::Bound {
            lambda: lambda_alpha_profile(path, alpha, comps)?,
            y_norm: holder_sup_norm_profile(path, alpha, comps)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcResult {
    /// First crossing time, or the grid horizon when `crossed` is false.
    pub time: f64,
    pub index: usize,
    pub crossed: bool,
}

/// First grid time where `Σ_k r^k ‖g_k(t)‖` (plus the tail, if requested) reaches `C`.
pub fn detect_tc(
    levels: &[ExpansionLevel],
    params: &BoundParams,
    tail: &TailMode,
) -> Result<TcResult> {
    params.validate()?;
    let first = levels
        .first()
        .ok_or_else(|| Error::domain("detect_tc needs at least one level"))?;
    let len = first.len();
    if levels.iter().any(|l| l.len() != len) {
        return Err(Error::GridMismatch("levels live on different grids".into()));
    }
    let horizon = TcResult {
        time: *first.times.last().unwrap(),
        index: len - 1,
        crossed: false,
    };
    if params.c == f64::INFINITY {
        return Ok(horizon);
    }
    if let TailMode::Bound { lambda, y_norm } = tail {
        if lambda.len() != len || y_norm.len() != len {
            return Err(Error::GridMismatch(
                "tail profiles do not match the level grid".into(),
            ));
        }
    }
    let norms: Vec<Vec<f64>> = levels.iter().map(|l| l.norms()).collect();
    let k_max = levels.len();
    let folded = BoundParams {
        m: params.m * params.r,
        ..*params
    };
    for p in 0..len {
        let mut s = 0.0;
        let mut rk = 1.0;
        for nk in &norms {
            rk *= params.r;
            s += rk * nk[p];
        }
        if let TailMode::Bound { lambda, y_norm } = tail {
            let t = first.times[p];
            let pn = PathNorms {
                lambda: lambda[p],
                c_alpha: if t > 0.0 {
                    c_alpha(t, params.alpha)?
                } else {
                    0.0
                },
                y_norm: y_norm[p],
            };
            match remainder_bound(&folded, &pn, k_max) {
                Ok(b) => s += b.direct,
                Err(Error::DivergentTail { .. }) => s = f64::INFINITY,
                Err(e) => return Err(e),
            }
        }
        if s >= params.c {
            return Ok(TcResult {
                time: first.times[p],
                index: p,
                crossed: true,
            });
        }
    }
    Ok(horizon)
}
