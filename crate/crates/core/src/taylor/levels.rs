//! Expansion levels `g_k`, the inductive construction `h_k`, and truncations.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::jets::{CoefficientTable, JetSystem};
use crate::paths::PathGrid;
use crate::word::{word_count, Word};

use super::integrals::{increments, walk_words};

/// Default cap on stored per-word samples (`words × grid points`).
pub const DEFAULT_PER_WORD_BUDGET: usize = 1 << 26;

/// One level `g_k` of the expansion on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionLevel {
    pub order: usize,
    pub times: Vec<f64>,
    /// State dimension `n`.
    pub dim: usize,
    /// Flat `len × n`: `values[p * n + j] = g_k^j(t_p)`.
    pub values: Vec<f64>,
    /// `∫_{Δ^k[0,t]} dy^I` for words with nonzero coefficient, when retained.
    pub per_word: Option<BTreeMap<Word, Vec<f64>>>,
}

impl ExpansionLevel {
    pub fn at(&self, p: usize) -> &[f64] {
        &self.values[p * self.dim..(p + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖g_k(t_p)‖` at every node.
    pub fn norms(&self) -> Vec<f64> {
        self.values
            .chunks(self.dim)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Largest component-wise difference to another level on the same grid.
    pub fn sup_distance(&self, other: &ExpansionLevel) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// CSV with header `k,t,component,value`; components count from 1.
pub fn write_levels_csv<W: Write>(levels: &[ExpansionLevel], mut w: W) -> Result<()> {
    writeln!(w, "k,t,component,value")?;
    for lvl in levels {
        for (p, t) in lvl.times.iter().enumerate() {
            for (j, v) in lvl.at(p).iter().enumerate() {
                writeln!(w, "{},{},{},{}", lvl.order, fmt_f64(*t), j + 1, fmt_f64(*v))?;
            }
        }
    }
    Ok(())
}

pub fn expansion_levels(
    path: &PathGrid,
    table: &CoefficientTable,
    k_max: usize,
) -> Result<Vec<ExpansionLevel>> {
    expansion_levels_with(path, table, k_max, false)
}

/// `g_k = Σ_{|I|=k} P_I ∫ dy^I` for `k = 1..=k_max`; subtrees of words whose
/// extensions all have `P = 0` are skipped.
pub fn expansion_levels_with(
    path: &PathGrid,
    table: &CoefficientTable,
    k_max: usize,
    retain_per_word: bool,
) -> Result<Vec<ExpansionLevel>> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    if table.max_order() < k_max {
        return Err(Error::domain(format!(
            "coefficient table covers orders up to {}, requested {k_max}",
            table.max_order()
        )));
    }
    if table.drive_count() != path.drive_count() {
        return Err(Error::GridMismatch(format!(
            "table has {} drivers, path has {}",
            table.drive_count(),
            path.drive_count()
        )));
    }
    let n = table.dimension();
    let d = table.drive_count();
    let len = path.len();

    // needed[k-1][rank]: the word or one of its right extensions has P ≠ 0.
    let mut needed: Vec<Vec<bool>> = (1..=k_max)
        .map(|k| {
            table
                .level(k)
                .chunks(n)
                .map(|v| v.iter().any(|x| *x != 0.0))
                .collect()
        })
        .collect();
    for k in (1..k_max).rev() {
        let (lo, hi) = needed.split_at_mut(k);
        for (r, flag) in lo[k - 1].iter_mut().enumerate() {
            if !*flag {
                *flag = (0..=d).any(|c| hi[0][r * (d + 1) + c]);
            }
        }
    }
    if retain_per_word {
        let words = needed.iter().flatten().filter(|f| **f).count();
        let samples = words.saturating_mul(len);
        if samples > DEFAULT_PER_WORD_BUDGET {
            return Err(Error::BudgetExceeded {
                what: "retained per-word samples",
                needed: samples,
                budget: DEFAULT_PER_WORD_BUDGET,
            });
        }
    } else if word_count(d, k_max).is_none() {
        return Err(Error::BudgetExceeded {
            what: "words",
            needed: usize::MAX,
            budget: usize::MAX,
        });
    }

    type State = (Vec<Vec<f64>>, BTreeMap<Word, Vec<f64>>);
    let rank = |letters: &[usize]| letters.iter().fold(0, |acc, &l| acc * (d + 1) + l);
    let states: Vec<State> = walk_words(
        path,
        k_max,
        || (vec![vec![0.0; len * n]; k_max], BTreeMap::new()),
        |letters| needed[letters.len() - 1][rank(letters)],
        |state: &mut State, letters, series| {
            let k = letters.len();
            let r = rank(letters);
            let p = &table.level(k)[r * n..(r + 1) * n];
            if p.iter().all(|x| *x == 0.0) {
                return;
            }
            let g = &mut state.0[k - 1];
            for (t, s) in series.iter().enumerate() {
                for (j, pj) in p.iter().enumerate() {
                    g[t * n + j] += pj * s;
                }
            }
            if retain_per_word {
                state.1.insert(Word::from(letters), series.to_vec());
            }
        },
    );

    let mut levels: Vec<ExpansionLevel> = (1..=k_max)
        .map(|k| ExpansionLevel {
            order: k,
            times: path.times().to_vec(),
            dim: n,
            values: vec![0.0; len * n],
            per_word: retain_per_word.then(BTreeMap::new),
        })
        .collect();
    for (gs, words) in states {
        for (lvl, g) in levels.iter_mut().zip(gs) {
            for (a, b) in lvl.values.iter_mut().zip(g) {
                *a += b;
            }
        }
        if retain_per_word {
            for (w, s) in words {
                levels[w.len() - 1].per_word.as_mut().unwrap().insert(w, s);
            }
        }
    }
    Ok(levels)
}

/// Truncated polynomials in `(ε, u)`: `c[e * (K+1) + p]` multiplies `ε^e u^p`.
struct BiPoly;

impl BiPoly {
    /// Coefficient `ε^e` of `a · b` (a polynomial in `u`), given both operands.
    fn mul_coeff(a: &[f64], b: &[f64], e: usize, w: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for e1 in 0..=e {
            let e2 = e - e1;
            let ra = &a[e1 * w..e1 * w + w];
            let rb = &b[e2 * w..e2 * w + w];
            for (p1, &x) in ra.iter().enumerate().take(e1 + 1) {
                if x == 0.0 {
                    continue;
                }
                for (p2, &y) in rb.iter().enumerate().take(e2 + 1) {
                    out[p1 + p2] += x * y;
                }
            }
        }
    }
}

/// `h_1, …, h_{k_max}` from the inductive system `dh_k = Σ_i C_i^{k−1}(h_1, …, h_{k−1}) dyⁱ`.
///
/// On each cell every `h_m` is a polynomial of degree `m` in the local
/// parameter `u ∈ [0, 1]`. The coefficient of `ε^{k−1}` in
/// `V_i(x0 + Σ_m ε^m h_m)` is formed from the Taylor polynomial of `V_i` at
/// `x0` in truncated `(ε, u)` arithmetic and integrated exactly against the
/// linear increment of `yⁱ`.
pub fn inductive_levels(
    system: &JetSystem,
    path: &PathGrid,
    k_max: usize,
) -> Result<Vec<ExpansionLevel>> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    if path.dim() != system.drive_count() + 1 {
        return Err(Error::GridMismatch(format!(
            "path has {} components, system expects {}",
            path.dim(),
            system.drive_count() + 1
        )));
    }
    let space = system.space();
    if space.order() + 1 < k_max {
        return Err(Error::JetOrderExhausted {
            word_len: k_max,
            needed: k_max - 1,
            available: space.order(),
        });
    }
    let n = system.dimension();
    let d1 = system.drive_count() + 1;
    let kk = k_max - 1;
    let w = kk + 1;
    let bsz = w * w;
    let mono_count = space.len_to(kk);

    // parent[a] = (b, m) with δ^a = δ^b · δ_m.
    let index: HashMap<Vec<u32>, usize> = (0..mono_count)
        .map(|a| (space.exponents(a).to_vec(), a))
        .collect();
    let parent: Vec<(usize, usize)> = (0..mono_count)
        .map(|a| {
            let e = space.exponents(a);
            match e.iter().position(|&x| x > 0) {
                None => (usize::MAX, usize::MAX),
                Some(m) => {
                    let mut b = e.to_vec();
                    b[m] -= 1;
                    (index[&b], m)
                }
            }
        })
        .collect();
    // Nonzero Taylor coefficients per (i, j): (monomial, coefficient).
    let coeffs: Vec<Vec<Vec<(usize, f64)>>> = (0..d1)
        .map(|i| {
            system
                .field_jets(i)
                .iter()
                .map(|jet| {
                    jet[..mono_count]
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| **c != 0.0)
                        .map(|(a, c)| (a, *c))
                        .collect()
                })
                .collect()
        })
        .collect();

    let incs = increments(path);
    let len = path.len();
    let mut levels: Vec<Vec<f64>> = vec![vec![0.0; len * n]; k_max];
    // Node values h_m(t_p) for m = 1..=k_max.
    let mut h_node = vec![vec![0.0; n]; k_max + 1];
    let mut delta = vec![vec![0.0; bsz]; n];
    let mut mono = vec![vec![0.0; bsz]; mono_count];
    let mut q = vec![vec![vec![0.0; w + 1]; n]; k_max + 1];
    let mut tmp = vec![0.0; w];

    for cell in 0..len - 1 {
        for dj in delta.iter_mut() {
            dj.iter_mut().for_each(|v| *v = 0.0);
        }
        for mv in mono.iter_mut() {
            mv.iter_mut().for_each(|v| *v = 0.0);
        }
        mono[0][0] = 1.0;
        for k in 1..=k_max {
            let e = k - 1;
            // Coefficient ε^e of every monomial δ^a with 1 ≤ |a| ≤ e.
            if e >= 1 {
                for a in 1..mono_count {
                    if space.degree_of(a) > e {
                        break;
                    }
                    let (b, m) = parent[a];
                    BiPoly::mul_coeff(&mono[b], &delta[m], e, w, &mut tmp);
                    mono[a][e * w..e * w + w].copy_from_slice(&tmp);
                }
            }
            // q_k(u) = Σ_i Δⁱ ∫₀ᵘ C_i^{k−1}(v) dv
            for j in 0..n {
                let qk = &mut q[k][j];
                qk.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d1 {
                    let dy = incs[i][cell];
                    if dy == 0.0 {
                        continue;
                    }
                    for &(a, c) in &coeffs[i][j] {
                        if space.degree_of(a) > e {
                            continue;
                        }
                        let row = &mono[a][e * w..e * w + w];
                        for (p, &x) in row.iter().enumerate().take(e + 1) {
                            qk[p + 1] += dy * c * x / (p + 1) as f64;
                        }
                    }
                }
                // δ^j gains ε^k (h_k(t_p) + q_k(u)).
                if k <= kk {
                    let dj = &mut delta[j][k * w..k * w + w];
                    dj[0] = h_node[k][j];
                    let top = w.min(k + 1);
                    dj[1..top].copy_from_slice(&qk[1..top]);
                }
            }
        }
        for k in 1..=k_max {
            for j in 0..n {
                h_node[k][j] += q[k][j].iter().sum::<f64>();
                levels[k - 1][(cell + 1) * n + j] = h_node[k][j];
            }
        }
        if h_node.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("inductive levels at cell {cell}")));
        }
    }
    Ok(levels
        .into_iter()
        .enumerate()
        .map(|(k, values)| ExpansionLevel {
            order: k + 1,
            times: path.times().to_vec(),
            dim: n,
            values,
            per_word: None,
        })
        .collect())
}

/// `x0 + Σ_{k=1}^{N} g_k(t)` at every node, as rows of length `n`.
pub fn truncated_solution(
    levels: &[ExpansionLevel],
    x0: &[f64],
    n_terms: usize,
) -> Result<Vec<Vec<f64>>> {
    if n_terms > levels.len() {
        return Err(Error::domain(format!(
            "truncation order {n_terms} exceeds the {} available levels",
            levels.len()
        )));
    }
    if let Some(l) = levels.first() {
        if l.dim != x0.len() {
            return Err(Error::domain("x0 dimension does not match the levels"));
        }
    }
    let len = levels.first().map(|l| l.len()).unwrap_or(1);
    Ok((0..len)
        .map(|p| {
            let mut x = x0.to_vec();
            for lvl in &levels[..n_terms] {
                for (xj, g) in x.iter_mut().zip(lvl.at(p)) {
                    *xj += g;
                }
            }
            x
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{build_table, VectorField};

    fn scalar_linear(x0: f64, k: usize) -> JetSystem {
        JetSystem::new(
            vec![
                VectorField::zero(1),
                VectorField::linear(vec![vec![1.0]]).unwrap(),
            ],
            vec![x0],
            f64::INFINITY,
            k,
        )
        .unwrap()
    }

    #[test]
    fn first_level_is_field_times_increment() {
        let sys = JetSystem::new(
            vec![
                VectorField::constant(vec![0.5, 1.0]),
                VectorField::parse(&["(* x1 x2)", "(sin x1)"]).unwrap(),
            ],
            vec![0.3, 0.7],
            f64::INFINITY,
            1,
        )
        .unwrap();
        let p = PathGrid::from_fn(1.0, 9, 1, 1.0, |t| vec![t * t]).unwrap();
        let table = build_table(&sys, 1).unwrap();
        let g = expansion_levels(&p, &table, 1).unwrap();
        let h = inductive_levels(&sys, &p, 1).unwrap();
        let v1 = [0.21, 0.3f64.sin()];
        for i in 0..p.len() {
            let t = p.times()[i];
            for j in 0..2 {
                let exact = [0.5, 1.0][j] * t + v1[j] * t * t;
                assert!((g[0].at(i)[j] - exact).abs() < 1e-15);
                assert!((h[0].at(i)[j] - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_linear_levels() {
        let sys = scalar_linear(2.0, 6);
        let p = PathGrid::from_fn(1.0, 65, 1, 1.0, |t| vec![(4.0 * t).sin()]).unwrap();
        let table = build_table(&sys, 6).unwrap();
        let g = expansion_levels(&p, &table, 6).unwrap();
        let h = inductive_levels(&sys, &p, 6).unwrap();
        let mut fact = 1.0;
        for k in 1..=6 {
            fact *= k as f64;
            for i in 0..p.len() {
                let y = p.component(1)[i];
                let exact = 2.0 * y.powi(k as i32) / fact;
                assert!((g[k - 1].at(i)[0] - exact).abs() < 1e-13);
                assert!((h[k - 1].at(i)[0] - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_and_constant_fields() {
        let p = PathGrid::from_fn(1.0, 17, 1, 1.0, |t| vec![t.sqrt()]).unwrap();
        let zero = JetSystem::new(vec![VectorField::zero(2); 2], vec![1.0, 1.0], 1.0, 3).unwrap();
        for lvl in expansion_levels(&p, &build_table(&zero, 3).unwrap(), 3).unwrap() {
            assert!(lvl.values.iter().all(|v| *v == 0.0));
        }
        let cst = JetSystem::new(
            vec![
                VectorField::constant(vec![1.0]),
                VectorField::constant(vec![-2.0]),
            ],
            vec![0.0],
            1.0,
            4,
        )
        .unwrap();
        let h = inductive_levels(&cst, &p, 4).unwrap();
        for lvl in &h[1..] {
            assert!(lvl.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn per_word_reassembles_levels() {
        let sys = JetSystem::new(
            vec![
                VectorField::parse(&["(* 0.3 x2)", "(const 0.1)"]).unwrap(),
                VectorField::parse(&["(^ x2 2)", "(- x1)"]).unwrap(),
                VectorField::parse(&["(cos x1)", "(* x1 x2)"]).unwrap(),
            ],
            vec![0.4, -0.2],
            f64::INFINITY,
            3,
        )
        .unwrap();
        let p = PathGrid::from_fn(1.0, 33, 2, 1.0, |t| vec![(3.0 * t).sin(), t * t]).unwrap();
        let table = build_table(&sys, 3).unwrap();
        let levels = expansion_levels_with(&p, &table, 3, true).unwrap();
        for lvl in &levels {
            let words = lvl.per_word.as_ref().unwrap();
            for i in 0..p.len() {
                for j in 0..2 {
                    let s: f64 = words
                        .iter()
                        .map(|(w, v)| table.get(w).unwrap()[j] * v[i])
                        .sum();
                    let g = lvl.at(i)[j];
                    assert!((s - g).abs() <= 1e-12 * g.abs().max(1e-300) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn truncation_partial_sums() {
        let sys = scalar_linear(1.0, 10);
        let p = PathGrid::from_fn(1.0, 33, 1, 1.0, |t| vec![0.1 * t]).unwrap();
        let levels = expansion_levels(&p, &build_table(&sys, 10).unwrap(), 10).unwrap();
        let x0 = truncated_solution(&levels, &[1.0], 0).unwrap();
        assert!(x0.iter().all(|x| x == &vec![1.0]));
        let x10 = truncated_solution(&levels, &[1.0], 10).unwrap();
        for (i, x) in x10.iter().enumerate() {
            let y = p.component(1)[i];
            assert!((x[0] - y.exp()).abs() < 1e-8);
        }
        let x9 = truncated_solution(&levels, &[1.0], 9).unwrap();
        for i in 0..p.len() {
            assert!(((x10[i][0] - x9[i][0]) - levels[9].at(i)[0]).abs() < 1e-15);
        }
        assert!(truncated_solution(&levels, &[1.0], 11).is_err());
    }
}
