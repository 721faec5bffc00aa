//! Fractional integrals, right Weyl derivatives, `Λ_α(T, y)` and `C_α(T)`
//! on uniformly sampled functions.
//!
//! Integrals use product integration: the sampled function is replaced by its
//! piecewise-linear interpolant and each power kernel is integrated exactly on
//! every cell. Unimodular factors `(−1)^{±α}` are dropped throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::paths::{local_holder_constant, Components, PathGrid};
use crate::special::gamma_fn;

/// A real function sampled on a uniform grid.
#[derive(Debug, Clone, Copy)]
pub struct GridFn<'a> {
    times: &'a [f64],
    values: &'a [f64],
}

impl<'a> GridFn<'a> {
    pub fn new(times: &'a [f64], values: &'a [f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a grid function needs at least two points"));
        }
        if times.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("grid times must be strictly increasing"));
        }
        Ok(GridFn { times, values })
    }

    pub fn times(&self) -> &'a [f64] {
        self.times
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    fn mesh(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    fn node(&self, x: f64) -> Result<usize> {
        let h = self.mesh();
        let k = ((x - self.times[0]) / h).round();
        if k < 0.0 || k as usize >= self.times.len() {
            return Err(Error::domain(format!("{x} lies outside the grid")));
        }
        let k = k as usize;
        if (self.times[k] - x).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::domain(format!("{x} is not a grid node")));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub alpha: f64,
    pub t_end: f64,
    #[serde(default)]
    pub components: Components,
}

impl FracParams {
    pub fn new(alpha: f64, t_end: f64) -> Result<Self> {
        let p = FracParams {
            alpha,
            t_end,
            components: Components::All,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_components(mut self, components: Components) -> Self {
        self.components = components;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::domain("t_end must be positive"));
        }
        Ok(())
    }

    /// Checks `1 − β < α` for a path with Hölder hint `beta`.
    pub fn check_pairing(&self, beta: f64) -> Result<()> {
        if 1.0 - beta < self.alpha {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "alpha = {} must exceed 1 - beta = {}",
                self.alpha,
                1.0 - beta
            )))
        }
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "order must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Left Riemann–Liouville integral `I^α_{a+} f(x)`, `a` the first grid time.
pub fn left_fractional_integral(f: GridFn<'_>, alpha: f64, x: f64) -> Result<f64> {
    check_order(alpha)?;
    let (t, v) = (f.times, f.values);
    let a = t[0];
    let b = *t.last().unwrap();
    let h = f.mesh();
    if !(x > a && x <= b + 1e-12 * h) {
        return Err(Error::domain(format!("x = {x} outside ({a}, {b}]")));
    }
    let mut acc = 0.0;
    for j in 0..t.len() - 1 {
        if t[j] >= x {
            break;
        }
        let right = t[j + 1].min(x);
        let slope = (v[j + 1] - v[j]) / (t[j + 1] - t[j]);
        let ua = x - t[j];
        let ub = x - right;
        let w0 = (ua.powf(alpha) - ub.powf(alpha)) / alpha;
        let w1 = ua * w0 - (ua.powf(alpha + 1.0) - ub.powf(alpha + 1.0)) / (alpha + 1.0);
        acc += v[j] * w0 + slope * w1;
    }
    Ok(acc / gamma_fn(alpha))
}

/// Right Riemann–Liouville integral `I^α_{b−} f(x)` with `b = t_end`.
pub fn right_fractional_integral(f: GridFn<'_>, alpha: f64, x: f64, t_end: f64) -> Result<f64> {
    check_order(alpha)?;
    let (t, v) = (f.times, f.values);
    let ib = f.node(t_end)?;
    let ix = f.node(x)?;
    if ix > ib {
        return Err(Error::domain("x must not exceed t_end"));
    }
    let mut acc = 0.0;
    for j in ix..ib {
        // Distances from x: va < vb; the integrand is linear on the cell.
        let va = t[j] - t[ix];
        let vb = t[j + 1] - t[ix];
        let slope = (v[j + 1] - v[j]) / (t[j + 1] - t[j]);
        let w0 = (vb.powf(alpha) - va.powf(alpha)) / alpha;
        let w1 = (vb.powf(alpha + 1.0) - va.powf(alpha + 1.0)) / (alpha + 1.0) - va * w0;
        acc += v[j] * w0 + slope * w1;
    }
    Ok(acc / gamma_fn(alpha))
}

/// Weights of `∫ v^{α−2} dv` and `∫ (v − va) v^{α−2} dv` over `[va, vb]`, `0 < va < vb`.
#[inline]
fn weyl_cell_weights(va: f64, vb: f64, alpha: f64) -> (f64, f64) {
    let k0 = (va.powf(alpha - 1.0) - vb.powf(alpha - 1.0)) / (1.0 - alpha);
    let k1 = (vb.powf(alpha) - va.powf(alpha)) / alpha - va * k0;
    (k0, k1)
}

/// `∫_s^t (g(s) − g(u)) (u − s)^{α−2} du` for the linear interpolant, node indices `i < k`.
fn weyl_tail_integral(t: &[f64], g: &[f64], i: usize, k: usize, alpha: f64) -> f64 {
    let s = t[i];
    // First cell: g(s) − g(u) = −slope·(u − s), integrated exactly.
    let v1 = t[i + 1] - s;
    let mut acc = -(g[i + 1] - g[i]) / v1 * v1.powf(alpha) / alpha;
    for j in i + 1..k {
        let (k0, k1) = weyl_cell_weights(t[j] - s, t[j + 1] - s, alpha);
        let phi_a = g[i] - g[j];
        let slope = -(g[j + 1] - g[j]) / (t[j + 1] - t[j]);
        acc += phi_a * k0 + slope * k1;
    }
    acc
}

/// `|D^{1−α}_{t−} g(s)|` with `s < t` grid nodes; `compensated` replaces `g` by `g − g(t)`.
pub fn right_weyl_derivative(
    g: GridFn<'_>,
    alpha: f64,
    t: f64,
    s: f64,
    compensated: bool,
) -> Result<f64> {
    check_order(alpha)?;
    let k = g.node(t)?;
    let i = g.node(s)?;
    if i >= k {
        return Err(Error::domain(format!("need s < t, got s = {s}, t = {t}")));
    }
    let times = g.times;
    let v = g.values;
    let head = if compensated { v[i] - v[k] } else { v[i] };
    let tail = weyl_tail_integral(times, v, i, k, alpha);
    let d =
        (head / (times[k] - times[i]).powf(1.0 - alpha) + (1.0 - alpha) * tail) / gamma_fn(alpha);
    Ok(d.abs())
}

/// `C_α(T) = (1/(α(1−α)) + T^α)(1 + T^α) Γ(1−2α) T^{1−2α}`.
pub fn c_alpha(t_end: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1/2), got {alpha}"
        )));
    }
    if !(t_end > 0.0) {
        return Err(Error::domain("t_end must be positive"));
    }
    let ta = t_end.powf(alpha);
    Ok((1.0 / (alpha * (1.0 - alpha)) + ta)
        * (1.0 + ta)
        * gamma_fn(1.0 - 2.0 * alpha)
        * t_end.powf(1.0 - 2.0 * alpha))
}

/// Rows of `s` indices handled per parallel task in the Λ sweep.
const LAMBDA_BLOCK: usize = 32;

/// For each `t` node up to `last`, the largest `‖D^{1−α}_{t−} y_{t−}(s)‖` over `s < t`.
fn weyl_column_max(path: &PathGrid, alpha: f64, comps: Components, last: usize) -> Vec<f64> {
    let comp_range = match comps {
        Components::All => 0..path.dim(),
        Components::Drivers => 1..path.dim(),
    };
    let range: Vec<usize> = comp_range.clone().collect();
    let t = path.times();
    let h = path.mesh();
    let beta = path.beta_hint();
    let g_alpha = gamma_fn(alpha);
    let use_holder = alpha + beta > 1.0;
    let holder_factor = if use_holder {
        h.powf(alpha + beta - 1.0) * beta / (alpha + beta - 1.0) / g_alpha
    } else {
        0.0
    };
    let blocks = last.div_ceil(LAMBDA_BLOCK);
    let partial = exec::map_range(blocks, |b| {
        let mut col = vec![0.0f64; last + 1];
        let mut tail = vec![0.0f64; range.len()];
        let lo = b * LAMBDA_BLOCK;
        let hi = ((b + 1) * LAMBDA_BLOCK).min(last);
        for i in lo..hi {
            // Adjacent pair (s, t) = (t_i, t_{i+1}).
            let adj = if use_holder {
                local_holder_constant(path, &comp_range, i + 1, beta) * holder_factor
            } else {
                let sq: f64 = range
                    .iter()
                    .map(|&c| {
                        let dy = path.increment(c, i);
                        dy * dy
                    })
                    .sum();
                sq.sqrt() * h.powf(alpha - 1.0) / (alpha * g_alpha)
            };
            col[i + 1] = col[i + 1].max(adj);
            // Cumulative tail integrals for t = t_{i+2}, t_{i+3}, ...
            for (m, &c) in range.iter().enumerate() {
                let y = path.component(c);
                let v1 = t[i + 1] - t[i];
                tail[m] = -(y[i + 1] - y[i]) / v1 * v1.powf(alpha) / alpha;
            }
            for k in i + 2..=last {
                let (k0, k1) = weyl_cell_weights(t[k - 1] - t[i], t[k] - t[i], alpha);
                let dt = t[k] - t[i];
                let head_w = dt.powf(alpha - 1.0);
                let mut sq = 0.0;
                for (m, &c) in range.iter().enumerate() {
                    let y = path.component(c);
                    let phi_a = y[i] - y[k - 1];
                    let slope = -(y[k] - y[k - 1]) / h;
                    tail[m] += phi_a * k0 + slope * k1;
                    let d = (y[i] - y[k]) * head_w + (1.0 - alpha) * tail[m];
                    sq += d * d;
                }
                let v = sq.sqrt() / g_alpha;
                if v > col[k] {
                    col[k] = v;
                }
            }
        }
        col
    });
    let mut out = vec![0.0f64; last + 1];
    for col in partial {
        for (o, c) in out.iter_mut().zip(col) {
            if c > *o {
                *o = c;
            }
        }
    }
    out
}

/// Grid approximation of `Λ_α(T, y)` with `T = params.t_end`.
///
/// Pairs with `t − s < 2Δ` use the local Hölder bound when `α + β_hint > 1`,
/// and the exact value for the linear interpolant otherwise.
pub fn lambda_alpha(path: &PathGrid, params: &FracParams) -> Result<f64> {
    params.validate()?;
    let last = path.last_index_at_or_before(params.t_end)?;
    if last == 0 {
        return Ok(0.0);
    }
    let cols = weyl_column_max(path, params.alpha, params.components, last);
    Ok(cols.into_iter().fold(0.0, f64::max) / gamma_fn(1.0 - params.alpha))
}

/// `Λ_α(t_j, y)` at every grid node `t_j` (running maximum, 0 at `t_0`).
pub fn lambda_alpha_profile(path: &PathGrid, alpha: f64, comps: Components) -> Result<Vec<f64>> {
    FracParams::new(alpha, path.horizon())?;
    let last = path.len() - 1;
    let mut cols = weyl_column_max(path, alpha, comps, last);
    let g = gamma_fn(1.0 - alpha);
    let mut run = 0.0f64;
    for v in cols.iter_mut() {
        run = run.max(*v / g);
        *v = run;
    }
    Ok(cols)
}

/// The pathwise estimate `β T^{α+β−1} / ((α+β−1) Γ(1−α) Γ(α)) · η` for `Λ_α(T, y)`.
pub fn lambda_holder_estimate(alpha: f64, beta: f64, t_end: f64, eta: f64) -> Result<f64> {
    if !(alpha + beta > 1.0) {
        return Err(Error::domain("estimate needs alpha + beta > 1"));
    }
    Ok(beta * t_end.powf(alpha + beta - 1.0)
        / ((alpha + beta - 1.0) * gamma_fn(1.0 - alpha) * gamma_fn(alpha))
        * eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t_end: f64) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn left_integral_of_one() {
        let t = grid(64, 1.0);
        let v = vec![1.0; t.len()];
        let r = left_fractional_integral(GridFn::new(&t, &v).unwrap(), 0.5, 1.0).unwrap();
        assert!((r - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn left_integral_of_zero_and_domain() {
        let t = grid(8, 1.0);
        let v = vec![0.0; t.len()];
        let f = GridFn::new(&t, &v).unwrap();
        assert_eq!(left_fractional_integral(f, 0.3, 0.7).unwrap(), 0.0);
        assert!(left_fractional_integral(f, 1.0, 0.5).is_err());
        assert!(left_fractional_integral(f, 0.5, 0.0).is_err());
        assert!(left_fractional_integral(f, 0.5, 1.5).is_err());
    }

    #[test]
    fn left_integral_near_order_one() {
        let t = grid(256, 1.0);
        let v = t.clone();
        let r = left_fractional_integral(GridFn::new(&t, &v).unwrap(), 0.999, 0.8).unwrap();
        assert!((r - 0.32).abs() < 1e-2);
    }

    #[test]
    fn left_integral_off_grid_point() {
        // Linear f is reproduced exactly: I^α t = x^{1+α}/Γ(2+α).
        let t = grid(10, 1.0);
        let v = t.clone();
        let x = 0.537;
        let r = left_fractional_integral(GridFn::new(&t, &v).unwrap(), 0.4, x).unwrap();
        assert!((r - x.powf(1.4) / gamma_fn(2.4)).abs() < 1e-14);
    }

    #[test]
    fn weyl_linear_compensated() {
        let t = grid(64, 1.0);
        let v = t.clone();
        let g = GridFn::new(&t, &v).unwrap();
        let d = right_weyl_derivative(g, 0.25, 1.0, 0.5, true).unwrap();
        let exact = 0.5f64.powf(0.25) / gamma_fn(1.25);
        assert!((d - exact).abs() < 1e-12, "{d} vs {exact}");
        assert!((d - 0.927_7).abs() < 1e-4);
    }

    #[test]
    fn weyl_zero_and_domain() {
        let t = grid(16, 1.0);
        let v = vec![0.0; t.len()];
        let g = GridFn::new(&t, &v).unwrap();
        assert_eq!(right_weyl_derivative(g, 0.3, 1.0, 0.25, true).unwrap(), 0.0);
        assert!(right_weyl_derivative(g, 0.3, 0.25, 0.25, true).is_err());
        assert!(right_weyl_derivative(g, 0.3, 0.25, 0.5, false).is_err());
    }

    #[test]
    fn c_alpha_reference() {
        let v = c_alpha(1.0, 0.25).unwrap();
        assert!((v - 22.451_082_111_469_87).abs() / v < 1e-12);
        assert!(c_alpha(1e-8, 0.25).unwrap() < 1e-3);
        for a in [0.1, 0.25, 0.4] {
            assert!(c_alpha(2.0, a).unwrap() > c_alpha(1.0, a).unwrap());
        }
        assert!(c_alpha(1.0, 0.0).is_err());
        assert!(c_alpha(1.0, 0.5).is_err());
    }

    #[test]
    fn lambda_constant_path_is_zero() {
        let p = PathGrid::from_fn(1.0, 65, 2, 0.8, |_| vec![1.5, -2.0]).unwrap();
        let params = FracParams::new(0.3, 1.0)
            .unwrap()
            .with_components(Components::Drivers);
        assert_eq!(lambda_alpha(&p, &params).unwrap(), 0.0);
    }

    #[test]
    fn lambda_of_linear_path_matches_closed_form() {
        // |D^{1−α}_{t−} y_{t−}(s)| = (t−s)^α / Γ(1+α) for y(u) = u.
        let p = PathGrid::from_fn(1.0, 129, 1, 1.0, |t| vec![t]).unwrap();
        let params = FracParams::new(0.3, 1.0)
            .unwrap()
            .with_components(Components::Drivers);
        let lam = lambda_alpha(&p, &params).unwrap();
        let exact = 1.0 / (gamma_fn(1.3) * gamma_fn(0.7));
        assert!((lam - exact).abs() < 1e-12, "{lam} vs {exact}");
    }

    #[test]
    fn lambda_profile_is_monotone_and_ends_at_sup() {
        let p = PathGrid::from_fn(1.0, 65, 1, 1.0, |t| vec![(5.0 * t).sin()]).unwrap();
        let prof = lambda_alpha_profile(&p, 0.3, Components::All).unwrap();
        assert!(prof.windows(2).all(|w| w[1] >= w[0]));
        let full = lambda_alpha(&p, &FracParams::new(0.3, 1.0).unwrap()).unwrap();
        assert_eq!(*prof.last().unwrap(), full);
    }
}
