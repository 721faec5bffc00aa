//! Taylor coefficients `P_I = (V_{i_1}⋯V_{i_k} π)(x0)` by jet arithmetic, and
//! fitting of the analyticity growth parameters `(M, γ)`.

pub mod fields;
pub mod jet;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use fields::{Expr, Monomial, VectorField};
pub use jet::JetSpace;

use crate::csvio::fmt_f64;
use crate::error::{Error, Result};
use crate::exec;
use crate::special::{ln_factorial, ln_gamma};
use crate::word::{word_count, Word};

/// Default cap on `(number of words) × n` stored in a coefficient table.
pub const DEFAULT_TABLE_BUDGET: usize = 1 << 24;

/// Vector fields `V_0, …, V_d` on `ℝⁿ` together with their jets at `x0`.
#[derive(Debug, Clone)]
pub struct JetSystem {
    fields: Vec<VectorField>,
    x0: Vec<f64>,
    radius: f64,
    max_word_len: usize,
    space: Arc<JetSpace>,
    /// `field_jets[i][m]`: jet of `V_i^m` at `x0`.
    field_jets: Arc<Vec<Vec<Vec<f64>>>>,
}

impl JetSystem {
    /// `fields[i]` is `V_i`; words up to length `max_word_len` are supported.
    pub fn new(
        fields: Vec<VectorField>,
        x0: Vec<f64>,
        radius: f64,
        max_word_len: usize,
    ) -> Result<Self> {
        let n = x0.len();
        if n == 0 {
            return Err(Error::domain("state dimension must be positive"));
        }
        if fields.is_empty() {
            return Err(Error::domain("at least the drift field V_0 is required"));
        }
        if let Some((i, f)) = fields.iter().enumerate().find(|(_, f)| f.dimension() != n) {
            return Err(Error::domain(format!(
                "field V_{i} has dimension {}, x0 has {n}",
                f.dimension()
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::domain("analyticity radius must be positive"));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x0".into()));
        }
        let max_word_len = max_word_len.max(1);
        let space = Arc::new(JetSpace::new(n, max_word_len - 1));
        let field_jets: Vec<Vec<Vec<f64>>> = fields.iter().map(|f| f.jets(&space, &x0)).collect();
        if field_jets
            .iter()
            .flatten()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("vector field jets at x0".into()));
        }
        Ok(JetSystem {
            fields,
            x0,
            radius,
            max_word_len,
            space,
            field_jets: Arc::new(field_jets),
        })
    }

    /// The same fields with jets at a new base point.
    pub fn rebased(&self, x0: Vec<f64>) -> Result<Self> {
        Self::new(self.fields.clone(), x0, self.radius, self.max_word_len)
    }

    pub fn dimension(&self) -> usize {
        self.x0.len()
    }

    /// Number of drivers `d`; the alphabet is `{0, …, d}`.
    pub fn drive_count(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    /// Jets of the components of `V_i` at `x0`.
    pub fn field_jets(&self, i: usize) -> &[Vec<f64>] {
        &self.field_jets[i]
    }

    /// `V_i(x)` into `out`.
    pub fn eval_field(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.fields[i].eval_into(x, out);
    }

    /// `V_i` applied to the coordinate functions, i.e. the jets of `V_i`
    /// truncated at degree `deg`.
    fn field_truncated(&self, i: usize, deg: usize) -> Vec<Vec<f64>> {
        let keep = self.space.len_to(deg);
        self.field_jets[i]
            .iter()
            .map(|jet| {
                let mut out = self.space.zero();
                out[..keep].copy_from_slice(&jet[..keep]);
                out
            })
            .collect()
    }

    /// `G_j = Σ_m V_i^m ∂_m F_j`, truncated at degree `deg`.
    fn apply_field(&self, i: usize, f: &[Vec<f64>], deg: usize) -> Vec<Vec<f64>> {
        let s = &*self.space;
        let v = &self.field_jets[i];
        let mut tmp = s.zero();
        f.iter()
            .map(|fj| {
                let mut out = s.zero();
                for (m, vm) in v.iter().enumerate() {
                    s.derivative_into(fj, m, deg, &mut tmp);
                    s.mul_add(vm, &tmp, &mut out, deg);
                }
                out
            })
            .collect()
    }

    fn check_word(&self, word: &Word) -> Result<()> {
        word.check_alphabet(self.drive_count())?;
        if word.len() > self.max_word_len {
            return Err(Error::JetOrderExhausted {
                word_len: word.len(),
                needed: word.len() - 1,
                available: self.space.order(),
            });
        }
        Ok(())
    }
}

/// `P_I` for one word, composing the operators from the innermost letter out.
pub fn coefficient(system: &JetSystem, word: &Word) -> Result<Vec<f64>> {
    system.check_word(word)?;
    let k = word.len();
    let letters = word.letters();
    let mut f = system.field_truncated(letters[k - 1], k - 1);
    for (depth, &letter) in letters.iter().rev().enumerate().skip(1) {
        f = system.apply_field(letter, &f, k - (depth + 1));
    }
    Ok(f.iter().map(|fj| fj[0]).collect())
}

/// `P_I` for every word of length `1..=max_order`, stored densely by length and
/// lexicographic rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    n: usize,
    d: usize,
    max_order: usize,
    levels: Vec<Vec<f64>>,
}

impl CoefficientTable {
    /// Builds a table directly from per-length value arrays (`levels[k-1][rank * n + j]`).
    pub fn from_levels(n: usize, d: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        for (k, lvl) in levels.iter().enumerate() {
            let expect = (d + 1).pow(k as u32 + 1) * n;
            if lvl.len() != expect {
                return Err(Error::domain(format!(
                    "level {} has {} values, expected {expect}",
                    k + 1,
                    lvl.len()
                )));
            }
        }
        if levels.is_empty() {
            return Err(Error::domain(
                "a coefficient table needs at least one level",
            ));
        }
        Ok(CoefficientTable {
            n,
            d,
            max_order: levels.len(),
            levels,
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn drive_count(&self) -> usize {
        self.d
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of tabulated words.
    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.len() / self.n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, word: &Word) -> Option<&[f64]> {
        if word.len() > self.max_order || word.check_alphabet(self.d).is_err() {
            return None;
        }
        let i = word.index(self.d) * self.n;
        Some(&self.levels[word.len() - 1][i..i + self.n])
    }

    /// Flat values of all words of length `k`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Word, &[f64])> + '_ {
        self.levels.iter().enumerate().flat_map(move |(k, lvl)| {
            lvl.chunks(self.n)
                .enumerate()
                .map(move |(r, v)| (Word::from_index(r, k + 1, self.d), v))
        })
    }

    /// `max_{|I| = k} ‖P_I‖` for `k = 1..=max_order`.
    pub fn max_norms(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|lvl| {
                lvl.chunks(self.n)
                    .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// CSV with header `word,j,value`; `j` counts from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "word,j,value")?;
        for (word, v) in self.iter() {
            for (j, x) in v.iter().enumerate() {
                writeln!(w, "{word},{},{}", j + 1, fmt_f64(*x))?;
            }
        }
        Ok(())
    }
}

pub fn build_table(system: &JetSystem, k_max: usize) -> Result<CoefficientTable> {
    build_table_with_budget(system, k_max, DEFAULT_TABLE_BUDGET)
}

/// Tabulates all words up to `k_max`, reusing the operator composition of each
/// suffix for every word that extends it on the left.
pub fn build_table_with_budget(
    system: &JetSystem,
    k_max: usize,
    budget: usize,
) -> Result<CoefficientTable> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    let n = system.dimension();
    let d = system.drive_count();
    let needed = word_count(d, k_max)
        .and_then(|c| c.checked_mul(n))
        .unwrap_or(usize::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded {
            what: "coefficient table entries",
            needed,
            budget,
        });
    }
    if k_max > system.max_word_len {
        return Err(Error::JetOrderExhausted {
            word_len: k_max,
            needed: k_max - 1,
            available: system.space.order(),
        });
    }
    let letters: Vec<usize> = (0..=d).collect();
    let parts = exec::map_slice(&letters, |&c| {
        let mut out = Vec::new();
        let f = system.field_truncated(c, k_max - 1);
        table_dfs(system, &f, 1, c, k_max, &mut out);
        out
    });
    let mut levels: Vec<Vec<f64>> = (1..=k_max)
        .map(|k| vec![0.0; (d + 1).pow(k as u32) * n])
        .collect();
    for part in parts {
        for (depth, rank, vals) in part {
            levels[depth - 1][rank * n..(rank + 1) * n].copy_from_slice(&vals);
        }
    }
    Ok(CoefficientTable {
        n,
        d,
        max_order: k_max,
        levels,
    })
}

/// Visits the suffix trie below a node of depth `depth` whose word has rank `rank`.
fn table_dfs(
    system: &JetSystem,
    f: &[Vec<f64>],
    depth: usize,
    rank: usize,
    k_max: usize,
    out: &mut Vec<(usize, usize, Vec<f64>)>,
) {
    out.push((depth, rank, f.iter().map(|fj| fj[0]).collect()));
    if depth == k_max {
        return;
    }
    let d = system.drive_count();
    let place = (d + 1).pow(depth as u32);
    for c in 0..=d {
        let g = system.apply_field(c, f, k_max - depth - 1);
        table_dfs(system, &g, depth + 1, rank + c * place, k_max, out);
    }
}

/// Normalization `s_γ(k)` in the growth constraint `‖P_I‖ ≤ s_γ(|I|) M^{|I|}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthScale {
    /// `Γ(γk)`, with the convention `s_0 ≡ 1`.
    #[default]
    Gamma,
    /// `(k!)^γ`.
    FactorialPower,
}

impl GrowthScale {
    pub fn ln_scale(self, gamma: f64, k: usize) -> f64 {
        match self {
            GrowthScale::Gamma if gamma == 0.0 => 0.0,
            GrowthScale::Gamma => ln_gamma(gamma * k as f64),
            GrowthScale::FactorialPower => gamma * ln_factorial(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCandidate {
    pub gamma: f64,
    pub m: f64,
    pub admissible: bool,
    /// Per order `k`: `k ln M + ln s_γ(k) − max_{|I|=k} ln ‖P_I‖` (infinite for all-zero orders).
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub m: f64,
    pub gamma: f64,
    pub admissible: bool,
    pub residuals: Vec<f64>,
    pub scale: GrowthScale,
    pub candidates: Vec<GrowthCandidate>,
}

impl GrowthFit {
    /// `ln(s_γ(k) M^k)` for the selected pair.
    pub fn ln_envelope(&self, k: usize) -> f64 {
        self.scale.ln_scale(self.gamma, k) + k as f64 * self.m.ln()
    }
}

pub fn fit_growth(table: &CoefficientTable, gamma_grid: &[f64]) -> Result<GrowthFit> {
    fit_growth_with(table, gamma_grid, GrowthScale::Gamma)
}

/// Fits `(M, γ)` over a candidate grid of `γ`.
///
/// For each `γ` the smallest certified `M` is computed in log space. A
/// candidate is admissible when the table terminates (the top order vanishes)
/// or, with at least three orders, when the normalized growth ratio
/// `(max‖P_k‖ / max‖P_{k−1}‖) / (s_γ(k) / s_γ(k−1))` does not increase over the
/// last two orders. The smallest admissible `γ` is selected; without one, the
/// candidate with the smallest top-order ratio is returned as inadmissible.
pub fn fit_growth_with(
    table: &CoefficientTable,
    gamma_grid: &[f64],
    scale: GrowthScale,
) -> Result<GrowthFit> {
    if gamma_grid.is_empty() {
        return Err(Error::domain("gamma grid must be nonempty"));
    }
    if let Some(g) = gamma_grid.iter().find(|g| !(**g >= 0.0 && **g < 1.0)) {
        return Err(Error::domain(format!(
            "gamma candidates must lie in [0, 1), got {g}"
        )));
    }
    let ln_max: Vec<f64> = table
        .max_norms()
        .into_iter()
        .map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect();
    let k_max = ln_max.len();
    let terminating = ln_max[k_max - 1] == f64::NEG_INFINITY;

    let mut grid = gamma_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let ratio = |g: f64, k: usize| -> f64 {
        // Normalized log-ratio between orders k and k-1 (1-based).
        ln_max[k - 1] - ln_max[k - 2] - (scale.ln_scale(g, k) - scale.ln_scale(g, k - 1))
    };
    let candidates: Vec<GrowthCandidate> = grid
        .iter()
        .map(|&g| {
            let ln_m = (1..=k_max)
                .filter(|&k| ln_max[k - 1] > f64::NEG_INFINITY)
                .map(|k| (ln_max[k - 1] - scale.ln_scale(g, k)) / k as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            let residuals = (1..=k_max)
                .map(|k| {
                    if ln_max[k - 1] == f64::NEG_INFINITY {
                        f64::INFINITY
                    } else {
                        k as f64 * ln_m + scale.ln_scale(g, k) - ln_max[k - 1]
                    }
                })
                .collect();
            let admissible = terminating
                || (k_max >= 3
                    && ln_max[k_max - 3] > f64::NEG_INFINITY
                    && ratio(g, k_max) <= ratio(g, k_max - 1) + 1e-9);
            GrowthCandidate {
                gamma: g,
                m: ln_m.exp(),
                admissible,
                residuals,
            }
        })
        .collect();

    let chosen = match candidates.iter().find(|c| c.admissible) {
        Some(c) => c.clone(),
        None => {
            let key = |c: &GrowthCandidate| {
                if k_max >= 2 {
                    ratio(c.gamma, k_max)
                } else {
                    c.m.ln()
                }
            };
            candidates
                .iter()
                .min_by(|a, b| key(a).total_cmp(&key(b)))
                .unwrap()
                .clone()
        }
    };
    Ok(GrowthFit {
        m: chosen.m,
        gamma: chosen.gamma,
        admissible: chosen.admissible,
        residuals: chosen.residuals.clone(),
        scale,
        candidates,
    })
}
