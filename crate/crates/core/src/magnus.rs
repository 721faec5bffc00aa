//! Lie-series (Magnus-type) expansion for equations `dX = Σ_i X A_i dyⁱ` on matrix groups.
//!
//! `log X_t = Σ_I Λ_I(y)_t V_I` with right-nested brackets
//! `V_I = [A_{i_1}, [A_{i_2}, …, [A_{i_{k−1}}, A_{i_k}]…]]` and
//!
//! `Λ_I = Σ_{σ ∈ S_k} (−1)^{e(σ)} / (k² C(k−1, e(σ))) ∫ dy^{i_{σ(1)}} ⋯ dy^{i_{σ(k)}}`.

use std::collections::HashMap;
use std::io::Write;

use itertools::Itertools;
use nalgebra::DMatrix;

/// Dense real matrix used for generators and group elements.
pub type Matrix = DMatrix<f64>;

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::exec;
use crate::jets::VectorField;
use crate::paths::PathGrid;
use crate::taylor::integrals::{iterated_integral, walk_words};
use crate::word::Word;

/// Longest word whose `k!` permutations are enumerated by default.
pub const DEFAULT_PERMUTATION_CAP: usize = 6;

/// Lie-series norm beyond which exponentials are flagged as untrusted.
pub const DEFAULT_TRUST_RADIUS: f64 = 5.0;

/// Number of positions `j` with `σ(j) > σ(j+1)`; `sigma` lists `σ(1), …, σ(k)`.
pub fn descent_count(sigma: &[usize]) -> Result<usize> {
    let k = sigma.len();
    let mut seen = vec![false; k];
    for &s in sigma {
        if s == 0 || s > k || seen[s - 1] {
            return Err(Error::MalformedPermutation(format!(
                "{sigma:?} is not a bijection on 1..={k}"
            )));
        }
        seen[s - 1] = true;
    }
    Ok(sigma.windows(2).filter(|w| w[0] > w[1]).count())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `(−1)^e / (k² C(k−1, e))`.
fn permutation_weight(k: usize, e: usize) -> f64 {
    let sign = if e.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign / ((k * k) as f64 * binomial(k - 1, e))
}

/// Every `(σ(1..k), weight)` for `σ ∈ S_k`.
fn weighted_permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    (1..=k)
        .permutations(k)
        .map(|s| {
            let e = s.windows(2).filter(|w| w[0] > w[1]).count();
            (s, permutation_weight(k, e))
        })
        .collect()
}

/// Slot `m` integrates against letter `i_{σ⁻¹(m)}`.
fn permute(letters: &[usize], sigma: &[usize]) -> Vec<usize> {
    let mut out = vec![0; letters.len()];
    for (m, &s) in sigma.iter().enumerate() {
        out[s - 1] = letters[m];
    }
    out
}

fn check_cap(k: usize, cap: usize) -> Result<()> {
    if k > cap {
        return Err(Error::BudgetExceeded {
            what: "permutations",
            needed: (1..=k).product(),
            budget: (1..=cap).product(),
        });
    }
    Ok(())
}

pub fn magnus_coefficient(path: &PathGrid, word: &Word) -> Result<Vec<f64>> {
    magnus_coefficient_with_cap(path, word, DEFAULT_PERMUTATION_CAP)
}

/// `Λ_I(y)_t` at every grid node.
pub fn magnus_coefficient_with_cap(path: &PathGrid, word: &Word, cap: usize) -> Result<Vec<f64>> {
    word.check_alphabet(path.drive_count())?;
    let k = word.len();
    check_cap(k, cap)?;
    let mut cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut out = vec![0.0; path.len()];
    for (sigma, w) in weighted_permutations(k) {
        let p = permute(word.letters(), &sigma);
        if !cache.contains_key(&p) {
            let s = iterated_integral(path, &Word::new(p.clone())?)?;
            cache.insert(p.clone(), s);
        }
        for (o, v) in out.iter_mut().zip(&cache[&p]) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Generators of left-invariant fields `V_i(X) = X A_i`; letter 0 is the drift.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLieSetup {
    n: usize,
    generators: Vec<DMatrix<f64>>,
    has_drift: bool,
}

impl MatrixLieSetup {
    pub fn new(drift: Option<DMatrix<f64>>, generators: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = generators
            .first()
            .or(drift.as_ref())
            .map(|m| m.nrows())
            .ok_or_else(|| Error::domain("at least one generator is required"))?;
        let has_drift = drift.is_some();
        let mut all = vec![drift.unwrap_or_else(|| DMatrix::zeros(n, n))];
        all.extend(generators);
        for (i, a) in all.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::domain(format!("generator {i} is not {n}x{n}")));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("generator {i}")));
            }
        }
        Ok(MatrixLieSetup {
            n,
            generators: all,
            has_drift,
        })
    }

    /// Builds the setup from row-major nested lists.
    pub fn from_rows(drift: Option<Vec<Vec<f64>>>, generators: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let to_matrix = |rows: Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Error::domain("generators must be nonempty square matrices"));
            }
            Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
        };
        let drift = drift.map(to_matrix).transpose()?;
        let gens = generators
            .into_iter()
            .map(to_matrix)
            .collect::<Result<Vec<_>>>()?;
        MatrixLieSetup::new(drift, gens)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn drive_count(&self) -> usize {
        self.generators.len() - 1
    }

    pub fn has_drift(&self) -> bool {
        self.has_drift
    }

    /// `A_i`, with `A_0` the drift (zero when absent).
    pub fn generator(&self, i: usize) -> &DMatrix<f64> {
        &self.generators[i]
    }

    /// The same equation as vector fields on row-major `ℝ^{n²}`.
    pub fn vector_fields(&self) -> Result<Vec<VectorField>> {
        self.generators
            .iter()
            .map(|a| {
                let rows: Vec<Vec<f64>> =
                    a.row_iter().map(|r| r.iter().copied().collect()).collect();
                VectorField::matrix_right(&rows)
            })
            .collect()
    }

    /// Identity matrix flattened row-major.
    pub fn identity_flat(&self) -> Vec<f64> {
        flatten(&DMatrix::identity(self.n, self.n))
    }
}

pub fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter()
        .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
        .collect()
}

/// Right-nested commutator of the generators named by `word`.
pub fn lie_bracket_word(setup: &MatrixLieSetup, word: &Word) -> Result<DMatrix<f64>> {
    word.check_alphabet(setup.drive_count())?;
    let letters = word.letters();
    let mut acc = setup.generator(letters[letters.len() - 1]).clone();
    for &l in letters.iter().rev().skip(1) {
        let a = setup.generator(l);
        acc = a * &acc - &acc * a;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieSeriesTerm {
    pub word: Word,
    /// `Λ_I(y)_t` on the grid.
    pub coefficient: Vec<f64>,
    pub bracket: DMatrix<f64>,
}

/// Terms of the Lie series up to `k_max`, skipping words with vanishing bracket.
pub fn lie_series(
    setup: &MatrixLieSetup,
    path: &PathGrid,
    k_max: usize,
) -> Result<Vec<LieSeriesTerm>> {
    lie_series_with_cap(setup, path, k_max, DEFAULT_PERMUTATION_CAP)
}

pub fn lie_series_with_cap(
    setup: &MatrixLieSetup,
    path: &PathGrid,
    k_max: usize,
    cap: usize,
) -> Result<Vec<LieSeriesTerm>> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    check_cap(k_max, cap)?;
    if path.drive_count() != setup.drive_count() {
        return Err(Error::GridMismatch(format!(
            "path has {} drivers, setup has {}",
            path.drive_count(),
            setup.drive_count()
        )));
    }
    let d = setup.drive_count();
    let live = |l: usize| l > 0 || setup.has_drift();
    let mut words = Vec::new();
    for k in 1..=k_max {
        for w in Word::all_of_length(k, d) {
            if w.letters().iter().all(|&l| live(l)) {
                let b = lie_bracket_word(setup, &w)?;
                if b.iter().any(|v| *v != 0.0) {
                    words.push((w, b));
                }
            }
        }
    }
    // Every permutation of a live word is again live, so the trie walk only
    // needs words over live letters.
    let parts = walk_words(
        path,
        k_max,
        HashMap::new,
        |l| l.iter().all(|&c| live(c)),
        |m: &mut HashMap<Vec<usize>, Vec<f64>>, l, s| {
            m.insert(l.to_vec(), s.to_vec());
        },
    );
    let integrals: HashMap<Vec<usize>, Vec<f64>> = parts.into_iter().flatten().collect();
    let perms: Vec<Vec<(Vec<usize>, f64)>> = (1..=k_max).map(weighted_permutations).collect();
    let len = path.len();
    Ok(exec::map_slice(&words, |(w, b)| {
        let mut coef = vec![0.0; len];
        for (sigma, wt) in &perms[w.len() - 1] {
            let series = &integrals[&permute(w.letters(), sigma)];
            for (c, v) in coef.iter_mut().zip(series) {
                *c += wt * v;
            }
        }
        LieSeriesTerm {
            word: w.clone(),
            coefficient: coef,
            bracket: b.clone(),
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub time: f64,
    /// `exp` of the truncated series.
    pub matrix: DMatrix<f64>,
    /// Frobenius norm of the truncated series.
    pub series_norm: f64,
    /// `series_norm` lies within the trust radius.
    pub trusted: bool,
}

fn exponentiate(
    terms: &[LieSeriesTerm],
    n: usize,
    p: usize,
    time: f64,
    trust: f64,
) -> Result<GroupPoint> {
    let mut omega = DMatrix::<f64>::zeros(n, n);
    for t in terms {
        omega += &t.bracket * t.coefficient[p];
    }
    let series_norm = omega.norm();
    if !series_norm.is_finite() {
        return Err(Error::NonFinite(format!("Lie series at t = {time}")));
    }
    let trusted = series_norm <= trust;
    if !trusted {
        log::warn!(
            "Lie series norm {series_norm:.3e} at t = {time} exceeds the trust radius {trust}"
        );
    }
    Ok(GroupPoint {
        time,
        matrix: omega.exp(),
        series_norm,
        trusted,
    })
}

/// `exp(Σ_{|I|≤k_max} Λ_I(y)_t V_I)` at the grid node `t`.
pub fn group_solution(
    setup: &MatrixLieSetup,
    path: &PathGrid,
    k_max: usize,
    t: f64,
) -> Result<GroupPoint> {
    let p = path.index_of(t)?;
    let terms = lie_series(setup, path, k_max)?;
    exponentiate(
        &terms,
        setup.dimension(),
        p,
        path.times()[p],
        DEFAULT_TRUST_RADIUS,
    )
}

/// Group solution at every grid node.
pub fn group_trajectory(
    setup: &MatrixLieSetup,
    path: &PathGrid,
    k_max: usize,
    trust_radius: f64,
) -> Result<Vec<GroupPoint>> {
    let terms = lie_series(setup, path, k_max)?;
    let times = path.times();
    exec::map_range(path.len(), |p| {
        exponentiate(&terms, setup.dimension(), p, times[p], trust_radius)
    })
    .into_iter()
    .collect()
}

/// CSV `t,x11,x12,…` with matrices flattened row-major.
pub fn write_group_csv<W: Write>(points: &[GroupPoint], mut w: W) -> Result<()> {
    let n = points.first().map(|p| p.matrix.nrows()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    for r in 1..=n {
        for c in 1..=n {
            header.push(format!("x{r}{c}"));
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for p in points {
        let row: Vec<String> = std::iter::once(p.time)
            .chain(flatten(&p.matrix))
            .map(fmt_f64)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Eulerian numbers `A(k, e)`, `e = 0..k−1`.
fn eulerian_row(k: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    for m in 2..=k {
        let mut next = vec![0u128; m];
        for (e, slot) in next.iter_mut().enumerate() {
            let keep = if e < row.len() {
                (e as u128 + 1) * row[e]
            } else {
                0
            };
            let shift = if e >= 1 {
                (m - e) as u128 * row[e - 1]
            } else {
                0
            };
            *slot = keep + shift;
        }
        row = next;
    }
    row
}

/// `Σ_{σ ∈ S_k} 1/(k² C(k−1, e(σ)))`, exact through the descent distribution.
pub fn coefficient_magnitude_bound(k: usize) -> Result<f64> {
    if k == 0 || k > 20 {
        return Err(Error::domain(format!("k must lie in 1..=20, got {k}")));
    }
    Ok(eulerian_row(k)
        .iter()
        .enumerate()
        .map(|(e, &a)| a as f64 / ((k * k) as f64 * binomial(k - 1, e)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descents() {
        assert_eq!(descent_count(&[1, 2, 3, 4]).unwrap(), 0);
        assert_eq!(descent_count(&[4, 3, 2, 1]).unwrap(), 3);
        assert_eq!(descent_count(&[2, 1, 3]).unwrap(), 1);
        assert!(descent_count(&[1, 1, 3]).is_err());
        assert!(descent_count(&[0, 1]).is_err());
    }

    #[test]
    fn eulerian_rows() {
        assert_eq!(eulerian_row(4), vec![1, 11, 11, 1]);
        let total: u128 = eulerian_row(20).iter().sum();
        assert_eq!(total, (1..=20u128).product());
        assert_eq!(coefficient_magnitude_bound(1).unwrap(), 1.0);
        assert!((coefficient_magnitude_bound(2).unwrap() - 0.5).abs() < 1e-15);
        assert!(coefficient_magnitude_bound(21).is_err());
    }

    #[test]
    fn magnitude_bound_matches_enumeration() {
        for k in 1..=6 {
            let direct: f64 = weighted_permutations(k).iter().map(|(_, w)| w.abs()).sum();
            assert!((direct - coefficient_magnitude_bound(k).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn low_order_coefficients() {
        let p = PathGrid::from_fn(1.0, 65, 2, 1.0, |t| vec![t.sin(), t * t]).unwrap();
        let l1 = magnus_coefficient(&p, &Word::new(vec![2]).unwrap()).unwrap();
        for (a, y) in l1.iter().zip(p.component(2)) {
            assert!((a - y).abs() < 1e-15);
        }
        let w12 = Word::new(vec![1, 2]).unwrap();
        let w21 = Word::new(vec![2, 1]).unwrap();
        let l12 = magnus_coefficient(&p, &w12).unwrap();
        let l21 = magnus_coefficient(&p, &w21).unwrap();
        let i12 = iterated_integral(&p, &w12).unwrap();
        let i21 = iterated_integral(&p, &w21).unwrap();
        for q in 0..p.len() {
            assert!((l12[q] - 0.25 * (i12[q] - i21[q])).abs() < 1e-15);
            assert_eq!(l12[q], -l21[q]);
        }
        let l11 = magnus_coefficient(&p, &Word::new(vec![1, 1]).unwrap()).unwrap();
        assert!(l11.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn cap_is_enforced() {
        let p = PathGrid::from_fn(1.0, 9, 1, 1.0, |t| vec![t]).unwrap();
        let w = Word::new(vec![1; 7]).unwrap();
        assert!(matches!(
            magnus_coefficient(&p, &w),
            Err(Error::BudgetExceeded { .. })
        ));
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

    #[test]
    fn brackets() {
        let s = so3();
        let lz = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            lie_bracket_word(&s, &Word::new(vec![1, 2]).unwrap()).unwrap(),
            lz
        );
        assert_eq!(
            lie_bracket_word(&s, &Word::new(vec![1]).unwrap()).unwrap(),
            *s.generator(1)
        );
        assert!(lie_bracket_word(&s, &Word::new(vec![2, 2]).unwrap())
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    /// Product of exact cell exponentials: the solution for the linear interpolant.
    fn cell_product(setup: &MatrixLieSetup, path: &PathGrid, upto: usize) -> DMatrix<f64> {
        let n = setup.dimension();
        let mut x = DMatrix::identity(n, n);
        for cell in 0..upto {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..=setup.drive_count() {
                a += setup.generator(i) * path.increment(i, cell);
            }
            x *= a.exp();
        }
        x
    }

    #[test]
    fn series_matches_cell_exponentials() {
        let s = so3();
        let p = PathGrid::from_fn(0.2, 5, 2, 1.0, |t| vec![(2.0 * t).sin(), t * t - t]).unwrap();
        let exact = cell_product(&s, &p, 4);
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let g = group_solution(&s, &p, k, 0.2).unwrap();
            let err = (&g.matrix - &exact).norm();
            assert!(err < prev, "{k} {err}");
            prev = err;
        }
        assert!(prev < 1e-9, "{prev}");
    }

    #[test]
    fn truncation_error_has_the_right_order() {
        // Halving the drive must shrink the order-k error by about 2^{k+1}.
        let s = so3();
        let err = |eps: f64, k: usize| {
            let p = PathGrid::from_fn(1.0, 5, 2, 1.0, |t| {
                vec![eps * (3.0 * t).sin(), eps * (t * t - 2.0 * t)]
            })
            .unwrap();
            let exact = cell_product(&s, &p, 4);
            (&group_solution(&s, &p, k, 1.0).unwrap().matrix - &exact).norm()
        };
        for k in 1..=5 {
            let ratio = err(0.2, k) / err(0.1, k);
            let expect = 2f64.powi(k as i32 + 1);
            assert!(
                ratio > 0.7 * expect && ratio < 1.5 * expect,
                "k = {k}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn abelian_single_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -0.5, 0.1]);
        let s = MatrixLieSetup::new(None, vec![a.clone()]).unwrap();
        let p = PathGrid::from_fn(1.0, 33, 1, 1.0, |t| vec![(3.0 * t).cos()]).unwrap();
        let g = group_solution(&s, &p, 1, 1.0).unwrap();
        let y = p.component(1);
        let exact = (a * (y[32] - y[0])).exp();
        assert!((g.matrix - exact).norm() < 1e-13);
    }

    #[test]
    fn csv_layout() {
        let s = so3();
        let p = PathGrid::from_fn(0.1, 3, 2, 1.0, |t| vec![t, -t]).unwrap();
        let pts = group_trajectory(&s, &p, 2, DEFAULT_TRUST_RADIUS).unwrap();
        let mut buf = Vec::new();
        write_group_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x11,x12,x13,x21"));
        assert_eq!(text.lines().count(), 4);
    }
}
