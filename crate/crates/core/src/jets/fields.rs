//! Vector fields on `ℝⁿ`: built-in families and parsed expression trees.
//!
//! Expression syntax is parenthesized prefix notation:
//!
//! ```text
//! expr := number | x<m> | (var <m>) | (const <c>)
//!       | (+ expr...) | (- expr expr?) | (* expr...) | (^ expr <int>)
//!       | (exp expr) | (sin expr) | (cos expr)
//! ```
//!
//! Coordinates are numbered from 1, so `x1` and `(var 1)` denote the first one.
//! `·` is accepted as a synonym for `*`.

use serde::{Deserialize, Serialize};

use super::jet::JetSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, u32),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src);
        let mut pos = 0;
        let e = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!(
                "trailing input after expression at token {}",
                pos + 1
            )));
        }
        Ok(e)
    }

    /// Largest zero-based variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(m) => Some(*m),
            Expr::Add(v) | Expr::Mul(v) => v.iter().filter_map(Expr::max_var).max(),
            Expr::Sub(a, b) => a.max_var().max(b.max_var()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
                a.max_var()
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(m) => x[*m],
            Expr::Add(v) => v.iter().map(|e| e.eval(x)).sum(),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Mul(v) => v.iter().map(|e| e.eval(x)).product(),
            Expr::Pow(a, p) => a.eval(x).powi(*p as i32),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
        }
    }

    /// Taylor jet of the expression at `x0`.
    pub fn jet(&self, space: &JetSpace, x0: &[f64]) -> Vec<f64> {
        let k = space.order();
        match self {
            Expr::Const(c) => space.constant(*c),
            Expr::Var(m) => space.variable(*m, x0[*m]),
            Expr::Add(v) => {
                let mut out = space.zero();
                for e in v {
                    for (o, t) in out.iter_mut().zip(e.jet(space, x0)) {
                        *o += t;
                    }
                }
                out
            }
            Expr::Sub(a, b) => {
                let mut out = a.jet(space, x0);
                for (o, t) in out.iter_mut().zip(b.jet(space, x0)) {
                    *o -= t;
                }
                out
            }
            Expr::Neg(a) => a.jet(space, x0).into_iter().map(|v| -v).collect(),
            Expr::Mul(v) => {
                let mut out = space.constant(1.0);
                for e in v {
                    out = space.mul(&out, &e.jet(space, x0), k);
                }
                out
            }
            Expr::Pow(a, p) => space.powi(&a.jet(space, x0), *p),
            Expr::Exp(a) => space.exp(&a.jet(space, x0)),
            Expr::Sin(a) => space.sin(&a.jet(space, x0)),
            Expr::Cos(a) => space.cos(&a.jet(space, x0)),
        }
    }
}

fn tokenize(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in src.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() || c == ',' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_var_index(tok: &str) -> Result<usize> {
    let m: usize = tok
        .parse()
        .map_err(|_| Error::Parse(format!("bad variable index `{tok}`")))?;
    if m == 0 {
        return Err(Error::Parse("variables are numbered from 1".into()));
    }
    Ok(m - 1)
}

fn parse_atom(tok: &str) -> Result<Expr> {
    if let Ok(c) = tok.parse::<f64>() {
        return Ok(Expr::Const(c));
    }
    let rest = tok
        .strip_prefix("var_")
        .or_else(|| tok.strip_prefix("var"))
        .or_else(|| tok.strip_prefix('x'));
    match rest {
        Some(r) if !r.is_empty() => Ok(Expr::Var(parse_var_index(r)?)),
        _ => Err(Error::Parse(format!("unknown atom `{tok}`"))),
    }
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    *pos += 1;
    if tok != "(" {
        if tok == ")" {
            return Err(Error::Parse(format!("unexpected `)` at token {}", *pos)));
        }
        return parse_atom(tok);
    }
    let op = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("missing operator after `(`".into()))?
        .clone();
    *pos += 1;
    let expr = match op.as_str() {
        "const" => {
            let c = next_token(tokens, pos)?;
            Expr::Const(
                c.parse()
                    .map_err(|_| Error::Parse(format!("bad constant `{c}`")))?,
            )
        }
        "var" => Expr::Var(parse_var_index(next_token(tokens, pos)?)?),
        "^" => {
            let base = parse_expr(tokens, pos)?;
            let p = next_token(tokens, pos)?;
            let p: u32 = p.parse().map_err(|_| {
                Error::Parse(format!("exponent must be a nonnegative integer, got `{p}`"))
            })?;
            Expr::Pow(Box::new(base), p)
        }
        "exp" | "sin" | "cos" => {
            let a = Box::new(parse_expr(tokens, pos)?);
            match op.as_str() {
                "exp" => Expr::Exp(a),
                "sin" => Expr::Sin(a),
                _ => Expr::Cos(a),
            }
        }
        "+" | "*" | "·" | "-" | "−" => {
            let mut args = Vec::new();
            while tokens.get(*pos).map(String::as_str) != Some(")") {
                if *pos >= tokens.len() {
                    return Err(Error::Parse("unbalanced parentheses".into()));
                }
                args.push(parse_expr(tokens, pos)?);
            }
            match op.as_str() {
                "+" if !args.is_empty() => Expr::Add(args),
                "*" | "·" if !args.is_empty() => Expr::Mul(args),
                "-" | "−" if args.len() == 1 => Expr::Neg(Box::new(args.pop().unwrap())),
                "-" | "−" if args.len() == 2 => {
                    let b = args.pop().unwrap();
                    Expr::Sub(Box::new(args.pop().unwrap()), Box::new(b))
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "wrong number of arguments for `{op}`"
                    )))
                }
            }
        }
        other => return Err(Error::Parse(format!("unknown operator `{other}`"))),
    };
    match tokens.get(*pos).map(String::as_str) {
        Some(")") => {
            *pos += 1;
            Ok(expr)
        }
        _ => Err(Error::Parse(format!(
            "expected `)` after `{op}` expression"
        ))),
    }
}

fn next_token<'a>(tokens: &'a [String], pos: &mut usize) -> Result<&'a str> {
    let t = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    *pos += 1;
    Ok(t)
}

/// A monomial term `coef · Π x_m^{exps[m]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exps: Vec<u32>,
}

/// One vector field `V: ℝⁿ → ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    /// `V(x) = A x + b` with `A` row-major `n × n`.
    Affine { a: Vec<f64>, b: Vec<f64> },
    /// Each component is a sum of monomials.
    Polynomial(Vec<Vec<Monomial>>),
    /// Each component is an expression tree.
    Expr(Vec<Expr>),
}

impl VectorField {
    pub fn zero(n: usize) -> Self {
        VectorField::Affine {
            a: vec![0.0; n * n],
            b: vec![0.0; n],
        }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        let n = c.len();
        VectorField::Affine {
            a: vec![0.0; n * n],
            b: c,
        }
    }

    /// `V(x) = A x` with `A` given by rows.
    pub fn linear(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        Self::affine(rows, vec![0.0; n])
    }

    pub fn affine(rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain(format!(
                "affine field needs an {n}x{n} matrix"
            )));
        }
        Ok(VectorField::Affine {
            a: rows.into_iter().flatten().collect(),
            b,
        })
    }

    /// Right translation `X ↦ X·A` on `k × k` matrices stored row-major as `ℝ^{k²}`.
    pub fn matrix_right(a: &[Vec<f64>]) -> Result<Self> {
        let k = a.len();
        if a.iter().any(|r| r.len() != k) {
            return Err(Error::domain("generator must be square"));
        }
        let n = k * k;
        let mut m = vec![0.0; n * n];
        // (X A)_{rc} = Σ_q X_{rq} A_{qc}
        for r in 0..k {
            for c in 0..k {
                for q in 0..k {
                    m[(r * k + c) * n + r * k + q] = a[q][c];
                }
            }
        }
        Ok(VectorField::Affine {
            a: m,
            b: vec![0.0; n],
        })
    }

    pub fn polynomial(components: Vec<Vec<Monomial>>) -> Result<Self> {
        let n = components.len();
        for c in &components {
            for t in c {
                if t.exps.len() != n {
                    return Err(Error::domain(format!(
                        "monomial exponent vector has length {}, expected {n}",
                        t.exps.len()
                    )));
                }
            }
        }
        Ok(VectorField::Polynomial(components))
    }

    pub fn expressions(components: Vec<Expr>) -> Result<Self> {
        let n = components.len();
        if let Some(m) = components.iter().filter_map(Expr::max_var).max() {
            if m >= n {
                return Err(Error::domain(format!(
                    "expression uses x{} but the state has dimension {n}",
                    m + 1
                )));
            }
        }
        Ok(VectorField::Expr(components))
    }

    pub fn parse(components: &[&str]) -> Result<Self> {
        let exprs = components
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::expressions(exprs)
    }

    pub fn dimension(&self) -> usize {
        match self {
            VectorField::Affine { b, .. } => b.len(),
            VectorField::Polynomial(c) => c.len(),
            VectorField::Expr(c) => c.len(),
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            VectorField::Affine { a, b } => {
                let n = b.len();
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &a[j * n..(j + 1) * n];
                    *o = b[j] + row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            VectorField::Polynomial(c) => {
                for (o, terms) in out.iter_mut().zip(c) {
                    *o = terms
                        .iter()
                        .map(|t| {
                            t.coef
                                * t.exps
                                    .iter()
                                    .zip(x)
                                    .map(|(&e, &v)| v.powi(e as i32))
                                    .product::<f64>()
                        })
                        .sum();
                }
            }
            VectorField::Expr(c) => {
                for (o, e) in out.iter_mut().zip(c) {
                    *o = e.eval(x);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(x, &mut out);
        out
    }

    /// Jets of every component at `x0`.
    pub fn jets(&self, space: &JetSpace, x0: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dimension();
        let vars: Vec<Vec<f64>> = (0..n).map(|m| space.variable(m, x0[m])).collect();
        match self {
            VectorField::Affine { a, b } => (0..n)
                .map(|j| {
                    let mut out = space.constant(b[j]);
                    for m in 0..n {
                        let c = a[j * n + m];
                        if c != 0.0 {
                            for (o, v) in out.iter_mut().zip(&vars[m]) {
                                *o += c * v;
                            }
                        }
                    }
                    out
                })
                .collect(),
            VectorField::Polynomial(comps) => comps
                .iter()
                .map(|terms| {
                    let mut out = space.zero();
                    for t in terms {
                        let mut mono = space.constant(t.coef);
                        for (m, &e) in t.exps.iter().enumerate() {
                            if e > 0 {
                                mono = space.mul(&mono, &space.powi(&vars[m], e), space.order());
                            }
                        }
                        for (o, v) in out.iter_mut().zip(mono) {
                            *o += v;
                        }
                    }
                    out
                })
                .collect(),
            VectorField::Expr(comps) => comps.iter().map(|e| e.jet(space, x0)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let e = Expr::parse("(+ (* 2 x1) (^ (var 2) 3) (const -1))").unwrap();
        assert_eq!(e.eval(&[1.5, 2.0]), 3.0 + 8.0 - 1.0);
        let e = Expr::parse("(- (exp x1) (sin (· x1 x2)) )").unwrap();
        let v = e.eval(&[0.5, 2.0]);
        assert!((v - (0.5f64.exp() - 1.0f64.sin())).abs() < 1e-15);
        assert_eq!(Expr::parse("(- x1)").unwrap().eval(&[4.0]), -4.0);
        assert_eq!(Expr::parse("2.5").unwrap(), Expr::Const(2.5));
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "(+ x1",
            "(foo x1)",
            "(^ x1 1.5)",
            "x0",
            "(- x1 x1 x1)",
            "(exp x1) x2",
            ")",
        ] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
        assert!(VectorField::parse(&["x2"]).is_err());
    }

    #[test]
    fn matrix_right_is_right_multiplication() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let f = VectorField::matrix_right(&a).unwrap();
        let x = [0.5, -1.0, 2.0, 0.25];
        // [[0.5,-1],[2,0.25]] · [[1,2],[3,4]]
        assert_eq!(
            f.eval(&x),
            vec![0.5 - 3.0, 1.0 - 4.0, 2.0 + 0.75, 4.0 + 1.0]
        );
    }

    #[test]
    fn jets_match_pointwise_values() {
        let s = JetSpace::new(2, 3);
        let x0 = [0.3, -0.7];
        let fields = [
            VectorField::linear(vec![vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap(),
            VectorField::polynomial(vec![
                vec![Monomial {
                    coef: 2.0,
                    exps: vec![2, 1],
                }],
                vec![
                    Monomial {
                        coef: -1.0,
                        exps: vec![0, 3],
                    },
                    Monomial {
                        coef: 1.0,
                        exps: vec![0, 0],
                    },
                ],
            ])
            .unwrap(),
            VectorField::parse(&["(cos (* x1 x2))", "(exp (+ x1 x2))"]).unwrap(),
        ];
        for f in &fields {
            let jets = f.jets(&s, &x0);
            let v = f.eval(&x0);
            for (j, jet) in jets.iter().enumerate() {
                assert!((jet[0] - v[j]).abs() < 1e-15);
            }
        }
    }
}
