//! Young integrals on grid paths and the Picard reference solver.
//!
//! Integrals are exact for the piecewise-linear interpolants of both
//! integrand and integrator (the trapezoid rule). This keeps the chain rule
//! `∫ g dg = ½(g_t² − g_0²)` exact on the grid and matches the iterated
//! integrals used by the expansion.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::exec;
use crate::fraccalc::GridFn;
use crate::jets::JetSystem;
use crate::paths::PathGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct YoungIntegralResult {
    /// `∫₀^{t_n} f dg` at every grid node.
    pub value_at: Vec<f64>,
    pub mesh: f64,
}

/// Logs a warning when the Hölder exponents do not sum above one.
pub fn check_young_exponents(beta_f: f64, beta_g: f64) {
    if beta_f + beta_g <= 1.0 {
        warn!("Hölder exponents {beta_f} + {beta_g} do not exceed 1; the Young integral may not exist");
    }
}

/// Cumulative `∫ f dg` on a shared grid.
pub fn young_integral(f: GridFn<'_>, g: GridFn<'_>) -> Result<YoungIntegralResult> {
    if f.times() != g.times() {
        return Err(Error::GridMismatch(
            "integrand and integrator grids differ".into(),
        ));
    }
    let (fv, gv) = (f.values(), g.values());
    let mut value_at = Vec::with_capacity(fv.len());
    let mut acc = 0.0;
    value_at.push(0.0);
    for n in 0..fv.len() - 1 {
        acc += 0.5 * (fv[n] + fv[n + 1]) * (gv[n + 1] - gv[n]);
        value_at.push(acc);
    }
    Ok(YoungIntegralResult {
        value_at,
        mesh: f.times()[1] - f.times()[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Sup-norm tolerance; defaults to `1e-10 (1 + ‖x0‖)`.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Maximal depth of recursive horizon halving after a stall.
    #[serde(default = "default_max_splits")]
    pub max_splits: usize,
    /// Cells of the linearly interpolated path per grid cell.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_max_iter() -> usize {
    50
}

fn default_max_splits() -> usize {
    8
}

fn default_substeps() -> usize {
    1
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: None,
            max_iter: default_max_iter(),
            max_splits: default_max_splits(),
            substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub times: Vec<f64>,
    /// `trajectory[n]` is `X_{t_n}`.
    pub trajectory: Vec<Vec<f64>>,
    pub iterations_used: usize,
    /// Sup-norm fixed-point defect of the returned trajectory (largest over pieces).
    pub residual: f64,
    /// Residual after each iteration of the first (unsplit) attempt.
    pub residual_history: Vec<f64>,
    /// Number of horizon pieces used.
    pub pieces: usize,
}

impl SolverOutput {
    pub fn at(&self, n: usize) -> &[f64] {
        &self.trajectory[n]
    }

    pub fn last(&self) -> &[f64] {
        self.trajectory.last().unwrap()
    }

    /// CSV with header `t,x1,...,xn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.trajectory[0].len();
        let mut header = String::from("t");
        for j in 1..=n {
            header.push_str(&format!(",x{j}"));
        }
        writeln!(w, "{header}")?;
        for (t, x) in self.times.iter().zip(&self.trajectory) {
            let mut line = fmt_f64(*t);
            for v in x {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Points per parallel task when evaluating fields along a trajectory.
const EVAL_CHUNK: usize = 512;

/// `Φ(X)_n = x0 + Σ_i ∫₀^{t_n} V_i(X) dyⁱ` with the trapezoid rule; `x` is flat `len × n`.
fn picard_map(system: &JetSystem, incs: &[Vec<f64>], x0: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let d1 = incs.len();
    let len = x.len() / n;
    // vals[p * d1 * n + i * n + j] = V_i^j(X_p)
    let mut vals = vec![0.0; len * d1 * n];
    exec::for_each_chunk_mut(&mut vals, EVAL_CHUNK * d1 * n, |c, chunk| {
        let start = c * EVAL_CHUNK;
        for (q, slot) in chunk.chunks_mut(d1 * n).enumerate() {
            let p = start + q;
            let xp = &x[p * n..(p + 1) * n];
            for i in 0..d1 {
                system.eval_field(i, xp, &mut slot[i * n..(i + 1) * n]);
            }
        }
    });
    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(x0);
    let mut cur = x0.to_vec();
    for p in 0..len - 1 {
        let a = &vals[p * d1 * n..(p + 1) * d1 * n];
        let b = &vals[(p + 1) * d1 * n..(p + 2) * d1 * n];
        for i in 0..d1 {
            let dy = incs[i][p];
            if dy == 0.0 {
                continue;
            }
            for j in 0..n {
                cur[j] += 0.5 * (a[i * n + j] + b[i * n + j]) * dy;
            }
        }
        out.extend_from_slice(&cur);
    }
    out
}

struct Attempt {
    traj: Vec<f64>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
}

fn iterate(
    system: &JetSystem,
    incs: &[Vec<f64>],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> std::result::Result<Attempt, Attempt> {
    let n = x0.len();
    let len = incs[0].len() + 1;
    let mut x: Vec<f64> = x0.iter().copied().cycle().take(len * n).collect();
    let mut history = Vec::new();
    for m in 0..=max_iter {
        let y = picard_map(system, incs, x0, &x);
        let finite = y.iter().all(|v| v.is_finite());
        let r = if finite {
            sup_dist(&x, &y)
        } else {
            f64::INFINITY
        };
        history.push(r);
        if r < tol {
            return Ok(Attempt {
                traj: x,
                iterations: m,
                residual: r,
                history,
            });
        }
        if !finite || m == max_iter {
            return Err(Attempt {
                traj: x,
                iterations: m,
                residual: r,
                history,
            });
        }
        x = y;
    }
    unreachable!()
}

/// Solves on cells `lo..hi` of `incs`, halving the horizon on stalls.
#[allow(clippy::too_many_arguments)]
fn solve_piece(
    system: &JetSystem,
    incs: &[Vec<f64>],
    lo: usize,
    hi: usize,
    x0: &[f64],
    tol: f64,
    opts: &PicardOptions,
    depth: usize,
    history: &mut Option<Vec<f64>>,
) -> Result<(Vec<f64>, usize, f64, usize)> {
    let local: Vec<Vec<f64>> = incs.iter().map(|c| c[lo..hi].to_vec()).collect();
    match iterate(system, &local, x0, tol, opts.max_iter) {
        Ok(a) => {
            history.get_or_insert(a.history);
            Ok((a.traj, a.iterations, a.residual, 1))
        }
        Err(a) => {
            history.get_or_insert(a.history.clone());
            if depth >= opts.max_splits || hi - lo < 2 {
                return Err(if a.residual.is_finite() {
                    Error::NonConvergence {
                        iterations: a.iterations,
                        residual: a.residual,
                    }
                } else {
                    Error::NonFinite("picard iterate left the finite range".into())
                });
            }
            let mid = lo + (hi - lo) / 2;
            let n = x0.len();
            let (left, it_l, r_l, p_l) =
                solve_piece(system, incs, lo, mid, x0, tol, opts, depth + 1, history)?;
            let x_mid = left[left.len() - n..].to_vec();
            let (right, it_r, r_r, p_r) =
                solve_piece(system, incs, mid, hi, &x_mid, tol, opts, depth + 1, history)?;
            let mut traj = left;
            traj.extend_from_slice(&right[n..]);
            Ok((traj, it_l + it_r, r_l.max(r_r), p_l + p_r))
        }
    }
}

/// Fixed point of `X ↦ x0 + Σ_i ∫ V_i(X) dyⁱ` on the grid of `path`.
pub fn picard_solve(
    system: &JetSystem,
    path: &PathGrid,
    x0: &[f64],
    opts: &PicardOptions,
) -> Result<SolverOutput> {
    let n = system.dimension();
    if x0.len() != n {
        return Err(Error::domain(format!(
            "x0 has length {}, fields act on R^{n}",
            x0.len()
        )));
    }
    if path.dim() != system.drive_count() + 1 {
        return Err(Error::GridMismatch(format!(
            "path has {} components, system expects {}",
            path.dim(),
            system.drive_count() + 1
        )));
    }
    let tol = opts
        .tol
        .unwrap_or_else(|| 1e-10 * (1.0 + x0.iter().map(|v| v * v).sum::<f64>().sqrt()));
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if opts.substeps == 0 {
        return Err(Error::domain("substeps must be at least 1"));
    }
    let s = opts.substeps;
    let cells = path.len() - 1;
    let incs: Vec<Vec<f64>> = (0..path.dim())
        .map(|i| {
            (0..cells)
                .flat_map(|c| std::iter::repeat_n(path.increment(i, c) / s as f64, s))
                .collect()
        })
        .collect();
    let mut history = None;
    let (traj, iterations, residual, pieces) =
        solve_piece(system, &incs, 0, cells * s, x0, tol, opts, 0, &mut history)?;
    let trajectory = traj.chunks(n).step_by(s).map(|c| c.to_vec()).collect();
    Ok(SolverOutput {
        times: path.times().to_vec(),
        trajectory,
        iterations_used: iterations,
        residual,
        residual_history: history.unwrap_or_default(),
        pieces,
    })
}

/// `sup_n ‖X_n − x0 − Σ_i ∫₀^{t_n} V_i(X) dyⁱ‖` recomputed on the grid of `path`.
pub fn integral_defect(
    system: &JetSystem,
    path: &PathGrid,
    x0: &[f64],
    trajectory: &[Vec<f64>],
) -> Result<f64> {
    if trajectory.len() != path.len() {
        return Err(Error::GridMismatch(
            "trajectory and path lengths differ".into(),
        ));
    }
    let incs: Vec<Vec<f64>> = (0..path.dim())
        .map(|i| (0..path.len() - 1).map(|c| path.increment(i, c)).collect())
        .collect();
    let flat: Vec<f64> = trajectory.iter().flatten().copied().collect();
    let y = picard_map(system, &incs, x0, &flat);
    Ok(sup_dist(&flat, &y))
}
