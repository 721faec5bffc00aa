//! Sampled driving paths, their Hölder-type norms, and fractional Brownian
//! motion sampling for Hurst parameters above one half.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::special::euclid_norm;

/// Relative tolerance on the spacing of a uniform grid.
const SPACING_TOL: f64 = 1e-8;

/// Largest grid (in points) sampled by Cholesky under [`FbmMethod::Auto`].
pub const AUTO_CHOLESKY_MAX_POINTS: usize = 1025;

/// Which path components enter a norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Components {
    /// The clock component 0 and every driver.
    #[default]
    All,
    /// Drivers 1..=d only.
    Drivers,
}

impl Components {
    fn range(self, dim: usize) -> std::ops::Range<usize> {
        match self {
            Components::All => 0..dim,
            Components::Drivers => 1..dim,
        }
    }
}

/// A `(d+1)`-dimensional path on a uniform grid starting at time 0.
///
/// Component 0 is the clock `y⁰_t = t`; components `1..=d` are the drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    times: Vec<f64>,
    comps: Vec<Vec<f64>>,
    beta_hint: f64,
}

impl PathGrid {
    /// Builds a path from its grid and driver series; the clock is filled in.
    pub fn new(times: Vec<f64>, drivers: Vec<Vec<f64>>, beta_hint: f64) -> Result<Self> {
        let mut comps = Vec::with_capacity(drivers.len() + 1);
        comps.push(times.clone());
        comps.extend(drivers);
        Self::from_components(times, comps, beta_hint)
    }

    /// Builds a path from all `d+1` components; component 0 must equal `times`.
    pub fn from_components(times: Vec<f64>, comps: Vec<Vec<f64>>, beta_hint: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a path grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(Error::domain("grid must start at t = 0"));
        }
        let h = times[1] - times[0];
        for w in times.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return Err(Error::domain("grid times must be strictly increasing"));
            }
            if (step - h).abs() > SPACING_TOL * h.max(1.0) {
                return Err(Error::domain("grid must be uniform"));
            }
        }
        if !(beta_hint > 0.5 && beta_hint <= 1.0) {
            return Err(Error::domain(format!(
                "beta_hint must lie in (1/2, 1], got {beta_hint}"
            )));
        }
        if comps.is_empty() || comps[0] != times {
            return Err(Error::domain("component 0 must equal the grid times"));
        }
        for (i, c) in comps.iter().enumerate() {
            if c.len() != times.len() {
                return Err(Error::GridMismatch(format!(
                    "component {i} has {} samples, grid has {}",
                    c.len(),
                    times.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("component {i}")));
            }
        }
        Ok(PathGrid {
            times,
            comps,
            beta_hint,
        })
    }

    /// A uniform grid of `grid_size` points on `[0, horizon]` with drivers given by `f(t)`.
    pub fn from_fn<F>(
        horizon: f64,
        grid_size: usize,
        drive_count: usize,
        beta_hint: f64,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let times = uniform_times(horizon, grid_size)?;
        let mut drivers = vec![Vec::with_capacity(grid_size); drive_count];
        for &t in &times {
            let v = f(t);
            if v.len() != drive_count {
                return Err(Error::GridMismatch(format!(
                    "driver function returned {} values, expected {drive_count}",
                    v.len()
                )));
            }
            for (c, x) in drivers.iter_mut().zip(v) {
                c.push(x);
            }
        }
        Self::new(times, drivers, beta_hint)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of drivers `d`.
    pub fn drive_count(&self) -> usize {
        self.comps.len() - 1
    }

    /// Number of components `d + 1`.
    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn beta_hint(&self) -> f64 {
        self.beta_hint
    }

    pub fn mesh(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// The full `(d+1)`-vector at grid index `idx`.
    pub fn value(&self, idx: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[idx]).collect()
    }

    /// Increment of component `i` over cell `[t_n, t_{n+1}]`.
    #[inline]
    pub fn increment(&self, i: usize, n: usize) -> f64 {
        self.comps[i][n + 1] - self.comps[i][n]
    }

    pub fn with_beta_hint(mut self, beta_hint: f64) -> Result<Self> {
        if !(beta_hint > 0.5 && beta_hint <= 1.0) {
            return Err(Error::domain("beta_hint must lie in (1/2, 1]"));
        }
        self.beta_hint = beta_hint;
        Ok(self)
    }

    /// Grid index of `t`, which must coincide with a grid node.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.mesh();
        let k = (t / h).round();
        if t < -1e-12 || k as usize >= self.len() || (k * h - t).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::domain(format!("time {t} is not a grid node")));
        }
        Ok(k as usize)
    }

    /// Index of the last grid node not after `t`; errors when `t` lies outside the grid.
    pub fn last_index_at_or_before(&self, t: f64) -> Result<usize> {
        let h = self.mesh();
        if t < 0.0 || t > self.horizon() + 1e-9 * h {
            return Err(Error::domain(format!(
                "time {t} outside the grid span [0, {}]",
                self.horizon()
            )));
        }
        let k = ((t / h) + 1e-9).floor() as usize;
        Ok(k.min(self.len() - 1))
    }

    /// The sub-path on grid indices `start..=end`, re-based so it starts at time 0.
    ///
    /// Increments are unchanged, so iterated integrals over the window equal
    /// the iterated integrals of the original path over `[t_start, t_end]`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return Err(Error::domain(format!(
                "window {start}..={end} invalid for a grid of {} points",
                self.len()
            )));
        }
        let h = self.mesh();
        let times: Vec<f64> = (0..=end - start).map(|k| k as f64 * h).collect();
        let mut comps = vec![times.clone()];
        for c in &self.comps[1..] {
            comps.push(c[start..=end].to_vec());
        }
        Self::from_components(times, comps, self.beta_hint)
    }

    /// Multiplies every driver by `lambda`; the clock is untouched.
    pub fn scale_drivers(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.comps[1..] {
            for v in c.iter_mut() {
                *v *= lambda;
            }
        }
        out
    }

    /// Writes the path as CSV with header `t,y0,...,yd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for i in 0..self.dim() {
            header.push_str(&format!(",y{i}"));
        }
        writeln!(w, "{header}")?;
        for n in 0..self.len() {
            let mut line = crate::csvio::fmt_f64(self.times[n]);
            for c in &self.comps {
                line.push(',');
                line.push_str(&crate::csvio::fmt_f64(c[n]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads a path written by [`PathGrid::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, beta_hint: f64) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty path file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "y0" {
            return Err(Error::Parse(format!("bad path header `{header}`")));
        }
        for (k, c) in cols[1..].iter().enumerate() {
            if *c != format!("y{k}") {
                return Err(Error::Parse(format!("bad column `{c}` in path header")));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut comps = vec![Vec::new(); dim];
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))?;
            if vals.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    ln + 2,
                    dim + 1,
                    vals.len()
                )));
            }
            times.push(vals[0]);
            for (c, v) in comps.iter_mut().zip(&vals[1..]) {
                c.push(*v);
            }
        }
        // The clock column is re-derived from t so that it matches bit for bit.
        comps[0] = times.clone();
        Self::from_components(times, comps, beta_hint)
    }
}

pub fn uniform_times(horizon: f64, grid_size: usize) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain("horizon must be positive"));
    }
    if grid_size < 2 {
        return Err(Error::domain("grid_size must be at least 2"));
    }
    let h = horizon / (grid_size - 1) as f64;
    Ok((0..grid_size).map(|k| k as f64 * h).collect())
}

/// Covariance `½(s^{2H} + t^{2H} − |t−s|^{2H})` of fractional Brownian motion.
pub fn fbm_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!(
            "hurst must lie in (0,1), got {hurst}"
        )));
    }
    if t < 0.0 || s < 0.0 {
        return Err(Error::domain("covariance needs nonnegative times"));
    }
    let e = 2.0 * hurst;
    Ok(0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbmMethod {
    /// Cholesky up to [`AUTO_CHOLESKY_MAX_POINTS`], circulant embedding above.
    #[default]
    Auto,
    Cholesky,
    CirculantEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub dimension: usize,
    pub horizon: f64,
    pub grid_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub method: FbmMethod,
}

impl FbmSpec {
    pub fn new(hurst: f64, dimension: usize, horizon: f64, grid_size: usize, seed: u64) -> Self {
        FbmSpec {
            hurst,
            dimension,
            horizon,
            grid_size,
            seed,
            method: FbmMethod::Auto,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        FbmSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(Error::domain(format!(
                "hurst must lie strictly inside (0.5, 1), got {}",
                self.hurst
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::domain("fbm horizon must be positive"));
        }
        if self.dimension == 0 {
            return Err(Error::domain("fbm dimension must be positive"));
        }
        if self.grid_size < 2 {
            return Err(Error::domain("fbm grid_size must be at least 2"));
        }
        Ok(())
    }

    /// Default Hölder hint for sampled paths: slightly below the Hurst parameter.
    pub fn default_beta_hint(&self) -> f64 {
        (self.hurst - 0.05).max(0.5 + 1e-6)
    }
}

#[derive(Debug)]
enum Factor {
    /// Lower Cholesky factor of the covariance of `B(t_1..t_n)`, row-major.
    Cholesky { n: usize, lower: Vec<f64> },
    /// Square roots of `λ_k / m` for the circulant embedding of fGn.
    Circulant {
        n: usize,
        sqrt_eig: Vec<f64>,
        scale: f64,
    },
}

/// A reusable fBm sampler: the covariance factorization is computed once.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    hurst: f64,
    times: Vec<f64>,
    factor: Arc<Factor>,
    beta_hint: f64,
}

impl FbmSampler {
    pub fn new(spec: &FbmSpec) -> Result<Self> {
        spec.validate()?;
        let times = uniform_times(spec.horizon, spec.grid_size)?;
        let use_cholesky = match spec.method {
            FbmMethod::Cholesky => true,
            FbmMethod::CirculantEmbedding => false,
            FbmMethod::Auto => spec.grid_size <= AUTO_CHOLESKY_MAX_POINTS,
        };
        let factor = if use_cholesky {
            cholesky_factor(&times[1..], spec.hurst)?
        } else {
            circulant_factor(times.len() - 1, spec.hurst, times[1])?
        };
        Ok(FbmSampler {
            hurst: spec.hurst,
            times,
            factor: Arc::new(factor),
            beta_hint: spec.default_beta_hint(),
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn with_beta_hint(mut self, beta_hint: f64) -> Self {
        self.beta_hint = beta_hint;
        self
    }

    /// One scalar fBm path on the grid (value 0 at t = 0) from `rng`.
    fn sample_component(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        match &*self.factor {
            Factor::Cholesky { n, lower } => {
                let z: Vec<f64> = (0..*n).map(|_| StandardNormal.sample(rng)).collect();
                let mut out = Vec::with_capacity(n + 1);
                out.push(0.0);
                for i in 0..*n {
                    let row = &lower[i * n..i * n + i + 1];
                    out.push(row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum());
                }
                out
            }
            Factor::Circulant { n, sqrt_eig, scale } => {
                let m = sqrt_eig.len();
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let a: f64 = StandardNormal.sample(rng);
                        let b: f64 = StandardNormal.sample(rng);
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                let mut planner = FftPlanner::<f64>::new();
                planner.plan_fft_forward(m).process(&mut buf);
                let mut out = Vec::with_capacity(n + 1);
                let mut acc = 0.0;
                out.push(0.0);
                for c in buf.iter().take(*n) {
                    acc += c.re * scale;
                    out.push(acc);
                }
                out
            }
        }
    }

    /// Samples `dimension` independent components with the given seed.
    pub fn sample(&self, dimension: usize, seed: u64) -> Result<PathGrid> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let drivers: Vec<Vec<f64>> = (0..dimension)
            .map(|_| self.sample_component(&mut rng))
            .collect();
        PathGrid::new(self.times.clone(), drivers, self.beta_hint)
    }
}

fn cholesky_factor(times: &[f64], hurst: f64) -> Result<Factor> {
    let n = times.len();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = fbm_covariance(times[i], times[j], hurst)?;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let chol = cov.cholesky().ok_or_else(|| {
        Error::Factorization(format!(
            "grid covariance with {n} points is not numerically positive definite; reduce grid_size or use circulant embedding"
        ))
    })?;
    let l = chol.l();
    let mut lower = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            lower[i * n + j] = l[(i, j)];
        }
    }
    Ok(Factor::Cholesky { n, lower })
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag `k`.
fn fgn_autocov(k: usize, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

fn circulant_factor(n: usize, hurst: f64, mesh: f64) -> Result<Factor> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocov(k, hurst), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocov(k, hurst), 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut row);
    let max = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let mut sqrt_eig = Vec::with_capacity(m);
    for c in &row {
        let mut lambda = c.re;
        if lambda < 0.0 {
            if lambda < -1e-10 * max {
                return Err(Error::Factorization(format!(
                    "circulant embedding has a negative eigenvalue {lambda:e}"
                )));
            }
            lambda = 0.0;
        }
        sqrt_eig.push((lambda / m as f64).sqrt());
    }
    Ok(Factor::Circulant {
        n,
        sqrt_eig,
        scale: mesh.powf(hurst),
    })
}

/// Samples an fBm path with clock component 0 and `spec.dimension` independent drivers.
pub fn sample_fbm(spec: &FbmSpec) -> Result<PathGrid> {
    FbmSampler::new(spec)?.sample(spec.dimension, spec.seed)
}

/// `∫` of `(t−s)^{−1−α}` and `(s−s_j)(t−s)^{−1−α}` over a cell, in terms of
/// the distances `ua = t − s_j > ub = t − s_{j+1} > 0`.
#[inline]
fn hs_cell_weights(ua: f64, ub: f64, alpha: f64) -> (f64, f64) {
    let k0 = (ub.powf(-alpha) - ua.powf(-alpha)) / alpha;
    let k1 = ua * k0 - (ua.powf(1.0 - alpha) - ub.powf(1.0 - alpha)) / (1.0 - alpha);
    (k0, k1)
}

fn check_alpha_half(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1/2), got {alpha}"
        )));
    }
    Ok(())
}

fn diff_norm(path: &PathGrid, range: &std::ops::Range<usize>, a: usize, b: usize) -> f64 {
    range
        .clone()
        .map(|i| {
            let c = path.component(i);
            let d = c[a] - c[b];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Local Hölder constant at node `i` from the two nearest increments.
pub(crate) fn local_holder_constant(
    path: &PathGrid,
    range: &std::ops::Range<usize>,
    i: usize,
    beta: f64,
) -> f64 {
    let n = path.len();
    let h = path.mesh();
    let first = if i >= 1 {
        diff_norm(path, range, i, i - 1)
    } else {
        diff_norm(path, range, 1, 0)
    };
    let second = if i >= 2 {
        diff_norm(path, range, i - 1, i - 2)
    } else if i + 1 < n {
        diff_norm(path, range, i + 1, i)
    } else {
        first
    };
    first.max(second) / h.powf(beta)
}

/// `‖y(t_i)‖ + ∫₀^{t_i} ‖y(t_i) − y(s)‖ (t_i − s)^{−1−α} ds` at every grid node.
fn holder_integrand_profile(
    path: &PathGrid,
    alpha: f64,
    comps: Components,
    last: usize,
) -> Vec<f64> {
    let range = comps.range(path.dim());
    let h = path.mesh();
    let beta = path.beta_hint();
    let times = path.times();
    exec::map_range(last + 1, |i| {
        let point: Vec<f64> = range.clone().map(|c| path.component(c)[i]).collect();
        let mut total = euclid_norm(&point);
        if i == 0 {
            return total;
        }
        let t = times[i];
        // Cell adjacent to s = t: Hölder extrapolation.
        let l = local_holder_constant(path, &range, i, beta);
        total += l * h.powf(beta - alpha) / (beta - alpha);
        // Remaining cells: integrand linear in s, kernel integrated exactly.
        let mut phi_next = diff_norm(path, &range, i, i - 1);
        for j in (0..i - 1).rev() {
            let phi_j = diff_norm(path, &range, i, j);
            let (k0, k1) = hs_cell_weights(t - times[j], t - times[j + 1], alpha);
            total += phi_j * k0 + (phi_next - phi_j) / h * k1;
            phi_next = phi_j;
        }
        total
    })
}

/// Grid approximation of `‖y‖_{α,t_end,∞}`.
pub fn holder_sup_norm(path: &PathGrid, alpha: f64, t_end: f64, comps: Components) -> Result<f64> {
    check_alpha_half(alpha)?;
    let last = path.last_index_at_or_before(t_end)?;
    Ok(holder_integrand_profile(path, alpha, comps, last)
        .into_iter()
        .fold(0.0, f64::max))
}

/// `‖y‖_{α,t_j,∞}` for every grid node `t_j` (running supremum).
pub fn holder_sup_norm_profile(path: &PathGrid, alpha: f64, comps: Components) -> Result<Vec<f64>> {
    check_alpha_half(alpha)?;
    let mut prof = holder_integrand_profile(path, alpha, comps, path.len() - 1);
    let mut run = 0.0f64;
    for v in prof.iter_mut() {
        run = run.max(*v);
        *v = run;
    }
    Ok(prof)
}

/// Largest ratio `‖y(t_j) − y(t_i)‖ / (t_j − t_i)^β` over all grid pairs.
pub fn max_increment_ratio(path: &PathGrid, beta: f64, comps: Components) -> f64 {
    let range = comps.range(path.dim());
    let times = path.times();
    let n = path.len();
    exec::map_range(n, |j| {
        (0..j)
            .map(|i| diff_norm(path, &range, j, i) / (times[j] - times[i]).powf(beta))
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// Largest ratio over adjacent grid cells only.
pub fn max_adjacent_increment_ratio(path: &PathGrid, beta: f64, comps: Components) -> f64 {
    let range = comps.range(path.dim());
    let h = path.mesh().powf(beta);
    (1..path.len())
        .map(|j| diff_norm(path, &range, j, j - 1) / h)
        .fold(0.0, f64::max)
}
