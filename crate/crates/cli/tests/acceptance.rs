//! Acceptance criteria 1 through 9. Each prints one PASS/FAIL line; the
//! process exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Context;
use young_taylor::fraccalc::{c_alpha, lambda_alpha, lambda_alpha_profile, FracParams};
use young_taylor::jets::{build_table, fit_growth, JetSystem, VectorField};
use young_taylor::magnus::{flatten, group_solution, lie_series, MatrixLieSetup};
use young_taylor::paths::{
    holder_sup_norm, holder_sup_norm_profile, sample_fbm, Components, FbmSpec, PathGrid,
};
use young_taylor::special::ln_gamma;
use young_taylor::stochastic::{mc_l2, pathwise_norm_stats, probabilistic_remainder, McConfig};
use young_taylor::taylor::{
    detect_tc, expansion_levels, inductive_levels, iterated_integral, remainder_bound,
    truncated_solution, BoundParams, PathNorms, TailMode,
};
use young_taylor::young::{picard_solve, PicardOptions};
use young_taylor::{Error, Word};
use young_taylor_cli::{run, ExperimentConfig};

type Outcome = anyhow::Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn word(letters: &[usize]) -> Word {
    Word::new(letters.to_vec()).unwrap()
}

fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn linear_scalar(max_word_len: usize) -> JetSystem {
    JetSystem::new(
        vec![
            VectorField::zero(1),
            VectorField::linear(vec![vec![1.0]]).unwrap(),
        ],
        vec![1.0],
        f64::INFINITY,
        max_word_len,
    )
    .unwrap()
}

fn linear_exactness() -> Outcome {
    let path = sample_fbm(&FbmSpec::new(0.75, 1, 0.5, 4097, 2024))?;
    let sys = linear_scalar(12);
    let table = build_table(&sys, 12)?;
    let levels = expansion_levels(&path, &table, 12)?;
    let trunc = truncated_solution(&levels, &[1.0], 12)?;
    let y = path.component(1);
    let exact: Vec<f64> = y.iter().map(|v| (v - y[0]).exp()).collect();
    let approx: Vec<f64> = trunc.iter().map(|x| x[0]).collect();
    let opts = PicardOptions {
        substeps: 4,
        ..Default::default()
    };
    let pic = picard_solve(&sys, &path, &[1.0], &opts)?;
    let pic_v: Vec<f64> = pic.trajectory.iter().map(|x| x[0]).collect();
    let e_exact = sup_rel(&approx, &exact);
    let e_pic = sup_rel(&approx, &pic_v);
    Ok((
        e_exact <= 1e-6 && e_pic <= 1e-4,
        format!("rel err vs exp {e_exact:.2e} (tol 1e-6), vs picard {e_pic:.2e} (tol 1e-4)"),
    ))
}

fn inductive_equivalence() -> Outcome {
    let sys = JetSystem::new(
        vec![
            VectorField::parse(&["(* 0.5 x2)", "(- (* x1 x1))"])?,
            VectorField::parse(&["(+ 1 (* x1 x2))", "(^ x1 2)"])?,
            VectorField::parse(&["(- x2)", "(+ x1 (* 0.3 x2 x2))"])?,
        ],
        vec![0.3, -0.2],
        f64::INFINITY,
        4,
    )?;
    let path = sample_fbm(&FbmSpec::new(0.7, 2, 1.0, 513, 77))?;
    let table = build_table(&sys, 4)?;
    let g = expansion_levels(&path, &table, 4)?;
    let h = inductive_levels(&sys, &path, 4)?;
    let gap = g
        .iter()
        .zip(&h)
        .map(|(a, b)| a.sup_distance(b))
        .fold(0.0, f64::max);
    let scale = g
        .iter()
        .flat_map(|l| l.values.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((
        gap <= 1e-6,
        format!("sup |h_k - g_k| over k <= 4 = {gap:.2e} (tol 1e-6, level magnitude {scale:.2e})"),
    ))
}

fn simplex_and_chen() -> Outcome {
    let path = sample_fbm(&FbmSpec::new(0.75, 2, 1.0, 4097, 5))?;
    let mut sym = 0.0f64;
    for i in 1..=2 {
        let y = path.component(i);
        for k in 1..=5 {
            let v = iterated_integral(&path, &word(&vec![i; k]))?;
            let fact: f64 = (1..=k).map(|j| j as f64).product();
            for (p, x) in v.iter().enumerate() {
                sym = sym.max((x - (y[p] - y[0]).powi(k as i32) / fact).abs());
            }
        }
    }
    let mid = path.len() / 3;
    let left = path.window(0, mid)?;
    let right = path.window(mid, path.len() - 1)?;
    let mut chen = 0.0f64;
    for w in [
        word(&[1, 2]),
        word(&[2, 1, 1]),
        word(&[1, 0, 2]),
        word(&[2, 1, 2, 1]),
    ] {
        let whole = *iterated_integral(&path, &w)?.last().unwrap();
        let mut split = 0.0;
        for j in 0..=w.len() {
            let a = match w.prefix(j).filter(|p| !p.is_empty()) {
                Some(p) => *iterated_integral(&left, &p)?.last().unwrap(),
                None => 1.0,
            };
            let b = match w.suffix_from(j).filter(|s| !s.is_empty()) {
                Some(s) => *iterated_integral(&right, &s)?.last().unwrap(),
                None => 1.0,
            };
            split += a * b;
        }
        chen = chen.max((whole - split).abs());
    }
    let mut shuffle = 0.0f64;
    for (i, j) in [(1, 2), (1, 1), (0, 2)] {
        let si = iterated_integral(&path, &word(&[i]))?;
        let sj = iterated_integral(&path, &word(&[j]))?;
        let sij = iterated_integral(&path, &word(&[i, j]))?;
        let sji = iterated_integral(&path, &word(&[j, i]))?;
        for p in 0..path.len() {
            shuffle = shuffle.max((si[p] * sj[p] - sij[p] - sji[p]).abs());
        }
    }
    Ok((
        sym <= 1e-6 && chen <= 1e-6 && shuffle <= 1e-6,
        format!("single-letter {sym:.2e}, chen {chen:.2e}, shuffle {shuffle:.2e} (tol 1e-6)"),
    ))
}

fn iterated_integral_domination() -> Outcome {
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for &h in &[0.6, 0.75] {
        for seed in 0..20u64 {
            let path = sample_fbm(&FbmSpec::new(h, 2, 1.0, 513, 1000 + seed))?;
            let words: Vec<(Word, Vec<f64>)> = (1..=4)
                .flat_map(|k| Word::all_of_length(k, 2))
                .map(|w| iterated_integral(&path, &w).map(|v| (w, v)))
                .collect::<Result<_, _>>()?;
            for &alpha in &[0.2, 0.3] {
                let lam = lambda_alpha(&path, &FracParams::new(alpha, 1.0)?)?;
                let ca = c_alpha(1.0, alpha)?;
                let y = holder_sup_norm(&path, alpha, 1.0, Components::All)?;
                let c = 1.0 - 2.0 * alpha;
                for (w, v) in &words {
                    let n = w.len() as f64;
                    let ln_b = ln_gamma(c) - ln_gamma(n * c) + (n - 1.0) * (ca * lam).ln() + y.ln();
                    for x in v {
                        checked += 1;
                        let r = (x.abs().ln() - ln_b).exp();
                        worst = worst.max(r);
                        if r > 1.0 {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations in {checked} checks, worst value/bound {worst:.3e}"),
    ))
}

struct DominationTally {
    compared: usize,
    finite: usize,
    violations: usize,
    worst: f64,
}

fn remainder_case(
    sys: &JetSystem,
    k_max: usize,
    radius: f64,
    tally: &mut DominationTally,
) -> Result<String, Error> {
    let alpha = 0.32;
    let x0 = sys.x0().to_vec();
    let path = sample_fbm(&FbmSpec::new(0.75, sys.drive_count(), 0.5, 257, 7))?.scale_drivers(0.02);
    let table = build_table(sys, k_max)?;
    let fit = fit_growth(&table, &[0.0, 0.1, 0.2])?;
    let levels = expansion_levels(&path, &table, k_max)?;
    let params = BoundParams::new(alpha, fit.gamma, fit.m, 2.0, radius, sys.drive_count())?
        .with_clock(false);
    let lam = lambda_alpha_profile(&path, alpha, Components::Drivers)?;
    let yn = holder_sup_norm_profile(&path, alpha, Components::Drivers)?;
    let tail = TailMode::Bound {
        lambda: lam.clone(),
        y_norm: yn.clone(),
    };
    let tc = detect_tc(&levels, &params, &tail)?;
    let opts = PicardOptions {
        substeps: 16,
        ..Default::default()
    };
    let pic = picard_solve(sys, &path, &x0, &opts)?;
    for n in 1..=8 {
        let tr = truncated_solution(&levels, &x0, n)?;
        for p in 1..tc.index {
            let norms = PathNorms {
                lambda: lam[p],
                c_alpha: c_alpha(path.times()[p], alpha)?,
                y_norm: yn[p],
            };
            let b = match remainder_bound(&params, &norms, n) {
                Ok(r) => r.direct,
                Err(Error::DivergentTail { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let err = euclid_dist(pic.at(p), &tr[p]);
            tally.compared += 1;
            if b.is_finite() {
                tally.finite += 1;
                tally.worst = tally.worst.max(err / b);
            }
            if err > b {
                tally.violations += 1;
            }
        }
    }
    Ok(format!("T_C node {}", tc.index))
}

fn remainder_domination() -> Outcome {
    let linear = linear_scalar(12);
    let rot = JetSystem::new(
        vec![
            VectorField::zero(2),
            VectorField::linear(vec![vec![0.0, 1.0], vec![-1.0, 0.0]])?,
            VectorField::linear(vec![vec![0.5, 0.0], vec![0.0, -0.5]])?,
        ],
        vec![1.0, 0.5],
        f64::INFINITY,
        10,
    )?;
    let tri = JetSystem::new(
        vec![
            VectorField::zero(2),
            VectorField::parse(&["(const 1)", "(^ x1 2)"])?,
            VectorField::parse(&["(const 0)", "x1"])?,
        ],
        vec![0.2, 0.1],
        f64::INFINITY,
        8,
    )?;
    let mut tally = DominationTally {
        compared: 0,
        finite: 0,
        violations: 0,
        worst: 0.0,
    };
    let notes = [
        format!(
            "linear C=1: {}",
            remainder_case(&linear, 12, 1.0, &mut tally)?
        ),
        format!(
            "linear C=inf: {}",
            remainder_case(&linear, 12, f64::INFINITY, &mut tally)?
        ),
        format!(
            "rotation: {}",
            remainder_case(&rot, 10, f64::INFINITY, &mut tally)?
        ),
        format!(
            "polynomial: {}",
            remainder_case(&tri, 8, f64::INFINITY, &mut tally)?
        ),
    ];
    Ok((
        tally.violations == 0 && tally.finite > 0,
        format!(
            "{} violations in {} comparisons ({} with finite bound), worst error/bound {:.3e}; {}",
            tally.violations,
            tally.compared,
            tally.finite,
            tally.worst,
            notes.join(", ")
        ),
    ))
}

fn l2_bound_check() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for &h in &[0.6, 0.75] {
        let words: Vec<Word> = (1..=3)
            .flat_map(|k| Word::all_of_length(k, 2))
            .filter(|w| !w.letters().contains(&0))
            .collect();
        let cfg = McConfig {
            replicates: 10_000,
            fbm: FbmSpec::new(h, 2, 1.0, 65, 500),
            words,
            confidence: 0.99,
        };
        let report = mc_l2(&cfg)?;
        let fails = report.rows.iter().filter(|r| !r.pass).count();
        let z = |w: &[usize], exact: f64| {
            let r = report.rows.iter().find(|r| r.word.letters() == w).unwrap();
            (r.empirical - exact).abs() / r.std_error
        };
        let t: f64 = 1.0;
        let z1 = z(&[1], t.powf(2.0 * h));
        let z11 = z(&[1, 1], 0.75 * t.powf(4.0 * h));
        ok &= fails == 0 && z1 <= 3.0 && z11 <= 3.0;
        parts.push(format!(
            "H={h}: {fails}/{} bound failures, (1) {z1:.2} SE, (1,1) {z11:.2} SE",
            report.rows.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn heisenberg() -> MatrixLieSetup {
    let e12 = vec![
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ];
    let e23 = vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0],
    ];
    MatrixLieSetup::from_rows(None, vec![e12, e23]).unwrap()
}

fn so3() -> MatrixLieSetup {
    let lx = vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, -1.0],
        vec![0.0, 1.0, 0.0],
    ];
    let ly = vec![
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0],
        vec![-1.0, 0.0, 0.0],
    ];
    MatrixLieSetup::from_rows(None, vec![lx, ly]).unwrap()
}

/// `yⁱ_t = sin(i t)` on `[0, horizon]`.
fn smooth_drive(horizon: f64) -> Result<PathGrid, Error> {
    PathGrid::from_fn(horizon, 1025, 2, 1.0, |t| vec![t.sin(), (2.0 * t).sin()])
}

struct GroupCheck {
    picard: f64,
    orthogonality: f64,
    det: f64,
}

fn check_group(setup: &MatrixLieSetup, path: &PathGrid, k_max: usize) -> Result<GroupCheck, Error> {
    let x0 = setup.identity_flat();
    let sys = JetSystem::new(setup.vector_fields()?, x0.clone(), f64::INFINITY, 1)?;
    let opts = PicardOptions {
        substeps: 32,
        ..Default::default()
    };
    let pic = picard_solve(&sys, path, &x0, &opts)?;
    let g = group_solution(setup, path, k_max, path.horizon())?;
    let picard = flatten(&g.matrix)
        .iter()
        .zip(pic.last())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let gtg = g.matrix.transpose() * &g.matrix;
    let mut orthogonality = 0.0f64;
    for i in 0..gtg.nrows() {
        for j in 0..gtg.ncols() {
            let e = if i == j { 1.0 } else { 0.0 };
            orthogonality = orthogonality.max((gtg[(i, j)] - e).abs());
        }
    }
    Ok(GroupCheck {
        picard,
        orthogonality,
        det: g.matrix.determinant(),
    })
}

fn magnus_correctness() -> Outcome {
    let hz = heisenberg();
    let hz_path = smooth_drive(1.0)?;
    let hz_check = check_group(&hz, &hz_path, 2)?;
    let longest = lie_series(&hz, &hz_path, 5)?
        .iter()
        .map(|t| t.word.len())
        .max()
        .unwrap_or(0);
    let so = so3();
    let so_check = check_group(&so, &smooth_drive(0.2)?, 5)?;
    let det_err = (so_check.det - 1.0).abs();
    Ok((
        hz_check.picard <= 1e-6
            && longest == 2
            && so_check.picard <= 1e-6
            && so_check.orthogonality <= 1e-10
            && det_err <= 1e-10,
        format!(
            "heisenberg vs picard {:.2e}, longest live bracket {longest}; so(3) vs picard {:.2e}, orthogonality {:.2e}, |det - 1| {det_err:.2e}",
            hz_check.picard, so_check.picard, so_check.orthogonality
        ),
    ))
}

fn convergence_speed() -> Outcome {
    let (h, t, alpha) = (0.6, 0.5, 0.46);
    let spec = FbmSpec::new(h, 1, t, 257, 900);
    let stats = pathwise_norm_stats(&spec, 50, alpha)?;
    let ca = c_alpha(t, alpha)?;
    // Place t inside the deterministic convergence window: M Λ C_α = 1/2.
    let m = 0.5 / (stats.mean_lambda * ca);
    let params = BoundParams::new(alpha, 0.0, m, 2.0, f64::INFINITY, 1)?.with_clock(false);
    let norms = PathNorms {
        lambda: stats.mean_lambda,
        c_alpha: ca,
        y_norm: stats.mean_y_norm,
    };
    let ratios = (2..=10)
        .map(|n| {
            let det = remainder_bound(&params, &norms, n)?.direct;
            let prob = probabilistic_remainder(n, t, h, m, 0.0, 1)?.direct;
            Ok(prob / det)
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    let last = *ratios.last().unwrap();
    Ok((
        monotone && last < 1e-2,
        format!(
            "M = {m:.3e}, ratio prob/det at N=2 {:.3e}, N=10 {last:.3e} (tol 1e-2), monotone {monotone}",
            ratios[0]
        ),
    ))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn reproducibility() -> Outcome {
    let dir = config_dir();
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    let tmp = tempfile::tempdir()?;
    let mut compared = 0usize;
    let mut mismatched = Vec::new();
    for cfg_path in &configs {
        let cfg = ExperimentConfig::load(cfg_path)?;
        let stem = cfg_path.file_stem().unwrap().to_string_lossy().to_string();
        let a = tmp.path().join(format!("{stem}-a"));
        let b = tmp.path().join(format!("{stem}-b"));
        let ma = run(&cfg, &dir, &a).with_context(|| stem.clone())?;
        run(&cfg, &dir, &b).with_context(|| stem.clone())?;
        for f in &ma.files {
            compared += 1;
            let x = std::fs::read(a.join(f))?;
            let y = std::fs::read(b.join(f))?;
            if x != y {
                mismatched.push(format!("{stem}/{f}"));
            }
        }
    }
    Ok((
        mismatched.is_empty() && compared > 0,
        format!(
            "{compared} CSVs from {} configs compared, {} differ{}",
            configs.len(),
            mismatched.len(),
            if mismatched.is_empty() {
                String::new()
            } else {
                format!(": {}", mismatched.join(", "))
            }
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1 linear exactness",
            linear_exactness,
            Duration::from_secs(10),
        ),
        (
            "2 inductive equivalence",
            inductive_equivalence,
            Duration::from_secs(60),
        ),
        (
            "3 simplex symmetry, chen, shuffle",
            simplex_and_chen,
            Duration::from_secs(30),
        ),
        (
            "4 iterated integral domination",
            iterated_integral_domination,
            Duration::from_secs(300),
        ),
        (
            "5 remainder domination",
            remainder_domination,
            Duration::from_secs(120),
        ),
        ("6 L2 bound", l2_bound_check, Duration::from_secs(600)),
        (
            "7 magnus correctness",
            magnus_correctness,
            Duration::from_secs(60),
        ),
        (
            "8 convergence speed",
            convergence_speed,
            Duration::from_secs(10),
        ),
        (
            "9 reproducibility",
            reproducibility,
            Duration::from_secs(600),
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok, detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let timing = if elapsed <= budget {
            ""
        } else {
            " [over time budget]"
        };
        let pass = ok && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({detail}; {:.1}s of {}s){timing}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
