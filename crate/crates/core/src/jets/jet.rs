//! Dense truncated multivariate Taylor polynomials.
//!
//! A jet stores the coefficients `c_a` of `f(x0 + δ) = Σ_a c_a δ^a` for all
//! multi-indices `a` with `|a| ≤ order`, in graded order. Products and
//! derivatives take an explicit truncation degree so callers can shrink the
//! working degree as a composition deepens.

use std::collections::HashMap;

/// Monomial bookkeeping shared by all jets of a given shape.
#[derive(Debug, Clone)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u32>>,
    degree: Vec<usize>,
    /// First index of each degree block; `degree_start[order + 1]` is the length.
    degree_start: Vec<usize>,
    /// `(a, b, c)` with `δ^a δ^b = δ^c`, sorted by `deg c`.
    mul_triples: Vec<(u32, u32, u32)>,
    /// Prefix lengths of `mul_triples` by maximal output degree.
    mul_prefix: Vec<usize>,
    /// Per variable: `(source, target, factor)` with `∂_m δ^source = factor δ^target`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
    var_index: Vec<usize>,
}

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut exps: Vec<Vec<u32>> = Vec::new();
        let mut degree = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(exps.len());
            let mut block = Vec::new();
            compositions(nvars, d as u32, &mut vec![0; nvars], 0, &mut block);
            for e in block {
                exps.push(e);
                degree.push(d);
            }
        }
        degree_start.push(exps.len());
        let index: HashMap<Vec<u32>, usize> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();

        let mut mul_triples = Vec::new();
        let mut mul_prefix = Vec::with_capacity(order + 1);
        for dc in 0..=order {
            for a in 0..exps.len() {
                let da = degree[a];
                if da > dc {
                    break;
                }
                let db = dc - da;
                for b in degree_start[db]..degree_start[db + 1] {
                    let c: Vec<u32> = exps[a].iter().zip(&exps[b]).map(|(x, y)| x + y).collect();
                    mul_triples.push((a as u32, b as u32, index[&c] as u32));
                }
            }
            mul_prefix.push(mul_triples.len());
        }

        let mut deriv = vec![Vec::new(); nvars];
        for (m, dm) in deriv.iter_mut().enumerate() {
            for (a, e) in exps.iter().enumerate() {
                if e[m] > 0 {
                    let mut t = e.clone();
                    t[m] -= 1;
                    dm.push((a as u32, index[&t] as u32, e[m] as f64));
                }
            }
        }
        let var_index = (0..nvars)
            .map(|m| {
                let mut e = vec![0; nvars];
                e[m] = 1;
                index.get(&e).copied().unwrap_or(usize::MAX)
            })
            .collect();
        JetSpace {
            nvars,
            order,
            exps,
            degree,
            degree_start,
            mul_triples,
            mul_prefix,
            deriv,
            var_index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients in a full jet.
    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Number of coefficients of degree at most `deg`.
    pub fn len_to(&self, deg: usize) -> usize {
        self.degree_start[deg.min(self.order) + 1]
    }

    pub fn exponents(&self, idx: usize) -> &[u32] {
        &self.exps[idx]
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        self.degree[idx]
    }

    pub fn zero(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn constant(&self, c: f64) -> Vec<f64> {
        let mut j = self.zero();
        j[0] = c;
        j
    }

    /// The jet of the coordinate `x_m` at a base point with `x_m = value`.
    pub fn variable(&self, m: usize, value: f64) -> Vec<f64> {
        let mut j = self.constant(value);
        if self.order >= 1 {
            j[self.var_index[m]] = 1.0;
        }
        j
    }

    /// `out += f · g`, keeping degrees `≤ deg`.
    pub fn mul_add(&self, f: &[f64], g: &[f64], out: &mut [f64], deg: usize) {
        let end = self.mul_prefix[deg.min(self.order)];
        for &(a, b, c) in &self.mul_triples[..end] {
            let fa = f[a as usize];
            if fa == 0.0 {
                continue;
            }
            out[c as usize] += fa * g[b as usize];
        }
    }

    pub fn mul(&self, f: &[f64], g: &[f64], deg: usize) -> Vec<f64> {
        let mut out = self.zero();
        self.mul_add(f, g, &mut out, deg);
        out
    }

    /// `∂_m f`, keeping degrees `≤ deg`; higher entries of `out` are zeroed.
    pub fn derivative_into(&self, f: &[f64], m: usize, deg: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let lim = self.len_to(deg);
        for &(src, dst, k) in &self.deriv[m] {
            if (dst as usize) < lim {
                out[dst as usize] = k * f[src as usize];
            }
        }
    }

    pub fn derivative(&self, f: &[f64], m: usize, deg: usize) -> Vec<f64> {
        let mut out = self.zero();
        self.derivative_into(f, m, deg, &mut out);
        out
    }

    /// Integer power by repeated multiplication.
    pub fn powi(&self, f: &[f64], p: u32) -> Vec<f64> {
        let mut acc = self.constant(1.0);
        for _ in 0..p {
            acc = self.mul(&acc, f, self.order);
        }
        acc
    }

    /// `Σ_m coeffs[m] · N^m` where `N = f − f(0)` is nilpotent.
    fn nilpotent_series(&self, f: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let mut nil = f.to_vec();
        nil[0] = 0.0;
        let mut out = self.constant(coeffs[0]);
        let mut pow = self.constant(1.0);
        for &c in coeffs.iter().skip(1) {
            pow = self.mul(&pow, &nil, self.order);
            for (o, p) in out.iter_mut().zip(&pow) {
                *o += c * p;
            }
        }
        out
    }

    pub fn exp(&self, f: &[f64]) -> Vec<f64> {
        let e = f[0].exp();
        let mut coeffs = Vec::with_capacity(self.order + 1);
        let mut fact = 1.0;
        for m in 0..=self.order {
            if m > 0 {
                fact *= m as f64;
            }
            coeffs.push(e / fact);
        }
        self.nilpotent_series(f, &coeffs)
    }

    fn trig(&self, f: &[f64], phase: usize) -> Vec<f64> {
        // The m-th derivative of sin at c is sin(c + mπ/2); cos shifts the phase by one.
        let (s, c) = f[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let mut coeffs = Vec::with_capacity(self.order + 1);
        let mut fact = 1.0;
        for m in 0..=self.order {
            if m > 0 {
                fact *= m as f64;
            }
            coeffs.push(cycle[(m + phase) % 4] / fact);
        }
        self.nilpotent_series(f, &coeffs)
    }

    pub fn sin(&self, f: &[f64]) -> Vec<f64> {
        self.trig(f, 0)
    }

    pub fn cos(&self, f: &[f64]) -> Vec<f64> {
        self.trig(f, 1)
    }
}

/// All exponent vectors of total degree `d` over `n` variables, in lexicographic order.
fn compositions(n: usize, d: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if n == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = d;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=d).rev() {
        cur[pos] = k;
        compositions(n, d - k, cur, pos + 1, out);
    }
    cur[pos] = 0;
}
