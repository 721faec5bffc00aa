//! Iterated integrals `∫_{Δ^k[0,t]} dy^I` of the piecewise-linear path.
//!
//! On a cell where the path is linear the signature is `exp` of the
//! increment, so one step of the one-letter recursion reads
//!
//! `I_w(t_{n+1}) = Σ_{l=0}^{k} I_{w[..l]}(t_n) · Π_{m>l} Δ^{w_m}_n / (k−l)!`
//!
//! with `I_∅ ≡ 1`. Chen's relation and the shuffle product therefore hold at
//! grid nodes up to rounding.

use crate::error::{Error, Result};
use crate::exec;
use crate::paths::PathGrid;
use crate::word::Word;

/// Cell increments `incs[i][n]` of every component.
pub(crate) fn increments(path: &PathGrid) -> Vec<Vec<f64>> {
    (0..path.dim())
        .map(|i| (0..path.len() - 1).map(|n| path.increment(i, n)).collect())
        .collect()
}

fn inv_factorials(k: usize) -> Vec<f64> {
    let mut out = vec![1.0; k + 1];
    for j in 1..=k {
        out[j] = out[j - 1] / j as f64;
    }
    out
}

/// Series of `w·c` given the series of every prefix of `w` (`anc[0] ≡ 1`).
fn extend_series(
    anc: &[Vec<f64>],
    letters: &[usize],
    c: usize,
    incs: &[Vec<f64>],
    inv_fact: &[f64],
) -> Vec<f64> {
    let depth = letters.len();
    let cells = incs[0].len();
    let mut out = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 0..cells {
        let mut prod = incs[c][n];
        let mut step = 0.0;
        for l in (0..=depth).rev() {
            step += anc[l][n] * prod * inv_fact[depth + 1 - l];
            if l > 0 {
                prod *= incs[letters[l - 1]][n];
            }
        }
        acc += step;
        out.push(acc);
    }
    out
}

fn check_word(path: &PathGrid, word: &Word) -> Result<()> {
    word.check_alphabet(path.drive_count())
        .map_err(|e| Error::domain(format!("{e} (path has {} drivers)", path.drive_count())))
}

/// `t ↦ ∫_{Δ^k[0,t]} dy^I` at every grid node.
pub fn iterated_integral(path: &PathGrid, word: &Word) -> Result<Vec<f64>> {
    check_word(path, word)?;
    let incs = increments(path);
    let inv_fact = inv_factorials(word.len());
    let mut anc = vec![vec![1.0; path.len()]];
    let letters = word.letters();
    for k in 0..letters.len() {
        let s = extend_series(&anc, &letters[..k], letters[k], &incs, &inv_fact);
        anc.push(s);
    }
    Ok(anc.pop().unwrap())
}

/// Iterated integrals of several words, computed independently.
pub fn iterated_integrals(path: &PathGrid, words: &[Word]) -> Result<Vec<Vec<f64>>> {
    for w in words {
        check_word(path, w)?;
    }
    exec::map_slice(words, |w| iterated_integral(path, w))
        .into_iter()
        .collect()
}

/// Depth-first traversal of the prefix trie of words up to `k_max`.
///
/// `needed(letters)` decides whether a node (and hence its subtree) is
/// computed; `visit(letters, series)` sees every computed node. Subtrees under
/// distinct first letters run as independent tasks, each with its own state
/// produced by `init`; the states are returned in letter order.
pub(crate) fn walk_words<S, I, N, V>(
    path: &PathGrid,
    k_max: usize,
    init: I,
    needed: N,
    visit: V,
) -> Vec<S>
where
    S: Send,
    I: Fn() -> S + Sync + Send,
    N: Fn(&[usize]) -> bool + Sync + Send,
    V: Fn(&mut S, &[usize], &[f64]) + Sync + Send,
{
    let incs = increments(path);
    let inv_fact = inv_factorials(k_max);
    let ones = vec![1.0; path.len()];
    let first: Vec<usize> = (0..path.dim()).collect();
    exec::map_slice(&first, |&c| {
        let mut state = init();
        if needed(&[c]) {
            let mut letters = vec![c];
            let series = extend_series(std::slice::from_ref(&ones), &[], c, &incs, &inv_fact);
            let mut anc = vec![ones.clone(), series];
            dfs(
                &incs,
                &inv_fact,
                k_max,
                &needed,
                &visit,
                &mut state,
                &mut letters,
                &mut anc,
            );
        }
        state
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs<S, N, V>(
    incs: &[Vec<f64>],
    inv_fact: &[f64],
    k_max: usize,
    needed: &N,
    visit: &V,
    state: &mut S,
    letters: &mut Vec<usize>,
    anc: &mut Vec<Vec<f64>>,
) where
    N: Fn(&[usize]) -> bool,
    V: Fn(&mut S, &[usize], &[f64]),
{
    visit(state, letters, anc.last().unwrap());
    if letters.len() == k_max {
        return;
    }
    for c in 0..incs.len() {
        letters.push(c);
        if needed(letters) {
            let parent = letters.len() - 1;
            let s = extend_series(anc, &letters[..parent], c, incs, inv_fact);
            anc.push(s);
            dfs(incs, inv_fact, k_max, needed, visit, state, letters, anc);
            anc.pop();
        }
        letters.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_letter_is_increment() {
        let p = PathGrid::from_fn(1.0, 17, 2, 1.0, |t| vec![t * t, (2.0 * t).sin()]).unwrap();
        let v = iterated_integral(&p, &Word::new(vec![2]).unwrap()).unwrap();
        for (a, b) in v.iter().zip(p.component(2)) {
            assert!((a - (b - p.component(2)[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_word_closed_form() {
        // ∫_{s1<s2<1} ds1 d(s2²) = ∫ s·2s ds = 2/3
        let p = PathGrid::from_fn(1.0, 4097, 2, 1.0, |t| vec![t, t * t]).unwrap();
        let v = iterated_integral(&p, &Word::new(vec![1, 2]).unwrap()).unwrap();
        assert!((v.last().unwrap() - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn alphabet_is_checked() {
        let p = PathGrid::from_fn(1.0, 5, 1, 1.0, |t| vec![t]).unwrap();
        assert!(iterated_integral(&p, &Word::new(vec![2]).unwrap()).is_err());
    }

    #[test]
    fn trie_matches_single_words() {
        let p = PathGrid::from_fn(1.0, 33, 2, 1.0, |t| vec![(3.0 * t).cos(), t.powi(3)]).unwrap();
        let states = walk_words(
            &p,
            3,
            Vec::new,
            |_| true,
            |s: &mut Vec<(Vec<usize>, Vec<f64>)>, l, v| s.push((l.to_vec(), v.to_vec())),
        );
        let all: Vec<_> = states.into_iter().flatten().collect();
        assert_eq!(all.len(), 3 + 9 + 27);
        for (l, v) in all {
            assert_eq!(iterated_integral(&p, &Word::new(l).unwrap()).unwrap(), v);
        }
    }
}
