//! Experiment execution and artifact bookkeeping.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use young_taylor::csvio::fmt_f64;
use young_taylor::fraccalc::{c_alpha, lambda_alpha_profile};
use young_taylor::jets::{build_table, fit_growth, GrowthFit};
use young_taylor::magnus::{group_trajectory, write_group_csv, MatrixLieSetup};
use young_taylor::paths::{holder_sup_norm_profile, Components, PathGrid};
use young_taylor::stochastic::mc_l2;
use young_taylor::taylor::{
    detect_tc, expansion_levels, inductive_levels, path_norms, remainder_bound, truncated_solution,
    write_bound_csv, write_levels_csv, BoundParams, PathNorms, TailMode, TcResult,
};
use young_taylor::young::{integral_defect, picard_solve};

use crate::config::{Experiment, ExperimentConfig};

/// Everything an experiment wrote, plus a summary of its results.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub summary: Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.dir.join(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn write_with<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> young_taylor::Result<()>,
    {
        let mut w = self.create(name)?;
        body(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush()?;
        Ok(())
    }
}

/// Runs one experiment, writing its CSVs and `manifest.json` into `out_dir`.
///
/// Relative file references in the config resolve against `base`.
pub fn run(config: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<Manifest> {
    config.validate(base)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let name = config.experiment.name();
    let summary = match config.experiment {
        Experiment::Solve => solve(config, base, &mut out),
        Experiment::Expand => expand(config, base, &mut out),
        Experiment::Bound => bound(config, base, &mut out),
        Experiment::Magnus => magnus(config, base, &mut out),
        Experiment::McL2 => mc(config, &mut out),
        Experiment::Compare => compare(config, base, &mut out),
    }
    .with_context(|| format!("experiment `{name}` failed"))?;

    let mut seeds: Vec<u64> = config
        .path
        .as_ref()
        .and_then(|p| p.seed())
        .into_iter()
        .collect();
    if let Some(mc) = &config.mc {
        seeds.extend((0..mc.replicates as u64).map(|r| mc.fbm.seed.wrapping_add(r)));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: name,
        seeds,
        config: config.clone(),
        files: out.files.clone(),
        summary,
    };
    let mut w = BufWriter::new(File::create(out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(manifest)
}

fn load_path(config: &ExperimentConfig, base: &Path) -> Result<PathGrid> {
    let p = config.path_source()?.build(base)?;
    Ok(if config.driver_scale == 1.0 {
        p
    } else {
        p.scale_drivers(config.driver_scale)
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn tc_json(tc: &TcResult) -> Value {
    json!({ "time": tc.time, "index": tc.index, "crossed": tc.crossed })
}

fn fit_json(fit: &GrowthFit, params: &BoundParams) -> Value {
    json!({
        "fitted_m": fit.m,
        "m": params.m,
        "gamma": fit.gamma,
        "admissible": fit.admissible,
    })
}

fn solve(config: &ExperimentConfig, base: &Path, out: &mut Outputs) -> Result<Value> {
    let sys_cfg = config.system()?;
    let sys = sys_cfg.build(1)?;
    let path = load_path(config, base)?;
    let sol = picard_solve(&sys, &path, &sys_cfg.x0, &config.params.picard)?;
    let defect = integral_defect(&sys, &path, &sys_cfg.x0, &sol.trajectory)?;
    out.write_with("solution.csv", |w| sol.write_csv(w))?;
    Ok(json!({
        "iterations": sol.iterations_used,
        "residual": sol.residual,
        "pieces": sol.pieces,
        "defect": defect,
        "final": sol.last(),
    }))
}

fn write_rows<W: Write>(w: &mut W, times: &[f64], rows: &[Vec<f64>]) -> young_taylor::Result<()> {
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|j| format!("x{j}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, r) in times.iter().zip(rows) {
        let cells: Vec<String> = std::iter::once(*t)
            .chain(r.iter().copied())
            .map(fmt_f64)
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

fn expand(config: &ExperimentConfig, base: &Path, out: &mut Outputs) -> Result<Value> {
    let sys_cfg = config.system()?;
    let k_max = config.params.k_max;
    let sys = sys_cfg.build(k_max)?;
    let path = load_path(config, base)?;
    let table = build_table(&sys, k_max)?;
    let levels = expansion_levels(&path, &table, k_max)?;
    out.write_with("coefficients.csv", |w| table.write_csv(w))?;
    out.write_with("levels.csv", |w| write_levels_csv(&levels, w))?;
    let trunc = truncated_solution(&levels, &sys_cfg.x0, config.params.n_max)?;
    out.write_with("truncation.csv", |w| write_rows(w, path.times(), &trunc))?;
    let mut summary =
        json!({ "k_max": k_max, "n_max": config.params.n_max, "final": trunc.last() });
    if config.params.inductive {
        let h = inductive_levels(&sys, &path, k_max)?;
        out.write_with("inductive_levels.csv", |w| write_levels_csv(&h, w))?;
        let gap = levels
            .iter()
            .zip(&h)
            .map(|(g, h)| g.sup_distance(h))
            .fold(0.0, f64::max);
        summary["inductive_sup_distance"] = json!(gap);
    }
    Ok(summary)
}

struct BoundSetup {
    params: BoundParams,
    fit: GrowthFit,
    comps: Components,
    lambda: Vec<f64>,
    y_norm: Vec<f64>,
}

impl BoundSetup {
    fn new(
        config: &ExperimentConfig,
        table: &young_taylor::jets::CoefficientTable,
        path: &PathGrid,
    ) -> Result<Self> {
        let p = &config.params;
        let grid = p.gamma.map_or_else(|| p.gamma_grid.clone(), |g| vec![g]);
        let fit = fit_growth(table, &grid)?;
        if !fit.admissible && p.m.is_none() {
            log::warn!(
                "growth fit is not admissible at k_max = {}",
                table.max_order()
            );
        }
        let params = config.bound_params(fit.gamma, p.m.unwrap_or(fit.m))?;
        let comps = if params.clock {
            Components::All
        } else {
            Components::Drivers
        };
        let alpha = params.alpha;
        Ok(BoundSetup {
            params,
            fit,
            comps,
            lambda: lambda_alpha_profile(path, alpha, comps)?,
            y_norm: holder_sup_norm_profile(path, alpha, comps)?,
        })
    }

    fn norms_at(&self, path: &PathGrid, p: usize) -> Result<PathNorms> {
        let t = path.times()[p];
        Ok(PathNorms {
            lambda: self.lambda[p],
            c_alpha: if t > 0.0 {
                c_alpha(t, self.params.alpha)?
            } else {
                0.0
            },
            y_norm: self.y_norm[p],
        })
    }

    fn tail_mode(&self, config: &ExperimentConfig) -> TailMode {
        if config.wants_tail() {
            TailMode::Bound {
                lambda: self.lambda.clone(),
                y_norm: self.y_norm.clone(),
            }
        } else {
            TailMode::None
        }
    }
}

/// `(direct, closed form)`, with a divergent tail reported as infinite.
fn bound_pair(params: &BoundParams, norms: &PathNorms, n: usize) -> Result<(f64, f64)> {
    match remainder_bound(params, norms, n) {
        Ok(b) => Ok((b.direct, b.closed_form.unwrap_or(f64::NAN))),
        Err(young_taylor::Error::DivergentTail { .. }) => Ok((f64::INFINITY, f64::INFINITY)),
        Err(e) => Err(e.into()),
    }
}

fn bound(config: &ExperimentConfig, base: &Path, out: &mut Outputs) -> Result<Value> {
    let sys_cfg = config.system()?;
    let k_max = config.params.k_max;
    let sys = sys_cfg.build(k_max)?;
    let path = load_path(config, base)?;
    let table = build_table(&sys, k_max)?;
    let setup = BoundSetup::new(config, &table, &path)?;
    let t = config.params.t.unwrap_or(path.horizon());
    let norms = path_norms(&path, setup.params.alpha, t, setup.comps)?;
    let mut rows = Vec::new();
    let mut closed = Vec::new();
    for n in 1..=config.params.n_max {
        let (d, c) = bound_pair(&setup.params, &norms, n)?;
        rows.push((n, d));
        closed.push((n, c));
    }
    out.write_with("bounds.csv", |w| write_bound_csv(&rows, w))?;
    out.write_with("bounds_closed_form.csv", |w| write_bound_csv(&closed, w))?;
    let levels = expansion_levels(&path, &table, k_max)?;
    let tc = detect_tc(&levels, &setup.params, &setup.tail_mode(config))?;
    Ok(json!({
        "t": t,
        "fit": fit_json(&setup.fit, &setup.params),
        "alphabet": setup.params.alphabet(),
        "norms": { "lambda": norms.lambda, "c_alpha": norms.c_alpha, "y_norm": norms.y_norm },
        "tc": tc_json(&tc),
    }))
}

fn compare(config: &ExperimentConfig, base: &Path, out: &mut Outputs) -> Result<Value> {
    let sys_cfg = config.system()?;
    let k_max = config.params.k_max;
    let sys = sys_cfg.build(k_max)?;
    let path = load_path(config, base)?;
    let table = build_table(&sys, k_max)?;
    let setup = BoundSetup::new(config, &table, &path)?;
    let levels = expansion_levels(&path, &table, k_max)?;
    let tc = detect_tc(&levels, &setup.params, &setup.tail_mode(config))?;
    let sol = picard_solve(&sys, &path, &sys_cfg.x0, &config.params.picard)?;
    let stride = config
        .params
        .stride
        .unwrap_or(((path.len() - 1) / 32).max(1));
    let truncs = (1..=config.params.n_max)
        .map(|n| truncated_solution(&levels, &sys_cfg.x0, n))
        .collect::<young_taylor::Result<Vec<_>>>()?;
    let mut w = out.create("compare.csv")?;
    writeln!(w, "t,N,error,bound,closed_form,inside_window")?;
    let mut violations = 0usize;
    let mut compared = 0usize;
    for p in (stride..path.len()).step_by(stride) {
        let norms = setup.norms_at(&path, p)?;
        let inside = p < tc.index || !tc.crossed;
        for (n, tr) in truncs.iter().enumerate() {
            let n = n + 1;
            let err = sol
                .at(p)
                .iter()
                .zip(&tr[p])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let (d, c) = bound_pair(&setup.params, &norms, n)?;
            if inside {
                compared += 1;
                if err > d {
                    violations += 1;
                }
            }
            writeln!(
                w,
                "{},{n},{},{},{},{inside}",
                fmt_f64(path.times()[p]),
                fmt_f64(err),
                fmt_f64(d),
                fmt_f64(c)
            )?;
        }
    }
    w.flush()?;
    Ok(json!({
        "fit": fit_json(&setup.fit, &setup.params),
        "tc": tc_json(&tc),
        "compared_inside_window": compared,
        "violations": violations,
        "picard_residual": finite_or_null(sol.residual),
    }))
}

fn magnus(config: &ExperimentConfig, base: &Path, out: &mut Outputs) -> Result<Value> {
    let m = config.magnus.as_ref().context("missing `magnus` section")?;
    let setup = MatrixLieSetup::from_rows(m.drift.clone(), m.generators.clone())?;
    let path = load_path(config, base)?;
    let pts = group_trajectory(&setup, &path, m.k_max, m.trust_radius)?;
    out.write_with("group.csv", |w| write_group_csv(&pts, w))?;
    let last = pts.last().unwrap();
    let orth = orthogonality_defect(&last.matrix);
    let mut summary = json!({
        "k_max": m.k_max,
        "final_series_norm": last.series_norm,
        "all_trusted": pts.iter().all(|p| p.trusted),
        "orthogonality_defect": orth,
    });
    if m.check_picard {
        let fields = setup.vector_fields()?;
        let sys =
            young_taylor::jets::JetSystem::new(fields, setup.identity_flat(), f64::INFINITY, 1)?;
        let sol = picard_solve(&sys, &path, &setup.identity_flat(), &config.params.picard)?;
        let flat = young_taylor::magnus::flatten(&last.matrix);
        let dist = flat
            .iter()
            .zip(sol.last())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        summary["picard_distance"] = json!(dist);
    }
    Ok(summary)
}

/// Frobenius norm of `GᵀG − I`.
fn orthogonality_defect(g: &young_taylor::magnus::Matrix) -> f64 {
    let gtg = g.transpose() * g;
    let mut acc = 0.0;
    for i in 0..gtg.nrows() {
        for j in 0..gtg.ncols() {
            let e = gtg[(i, j)] - if i == j { 1.0 } else { 0.0 };
            acc += e * e;
        }
    }
    acc.sqrt()
}

fn mc(config: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let section = config.mc.as_ref().context("missing `mc` section")?;
    let cfg = section.to_config()?;
    let report = mc_l2(&cfg)?;
    out.write_with("l2_report.csv", |w| report.write_csv(w))?;
    Ok(json!({
        "replicates": report.replicates,
        "all_pass": report.rows.iter().all(|r| r.pass),
    }))
}
