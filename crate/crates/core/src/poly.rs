//! Sparse multivariate polynomials in the unknowns `(lambda, l1, l2)`.
//!
//! Coefficients are generic so the same constraint construction runs in
//! double precision online and over a prime field during template generation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub const NVARS: usize = 3;
pub const VAR_LAMBDA: usize = 0;
pub const VAR_L1: usize = 1;
pub const VAR_L2: usize = 2;
pub const VAR_NAMES: [&str; NVARS] = ["lambda", "l1", "l2"];

pub trait Coeff:
    Copy
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// Integers modulo the Mersenne prime `2^31 - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Zp(pub u32);

impl Zp {
    pub const P: u32 = 2_147_483_647;

    pub fn new(v: u64) -> Self {
        Zp((v % Self::P as u64) as u32)
    }

    pub fn from_i64(v: i64) -> Self {
        let p = Self::P as i64;
        Zp(v.rem_euclid(p) as u32)
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Zp(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    pub fn inv(self) -> Self {
        debug_assert!(self.0 != 0);
        self.pow(Self::P as u64 - 2)
    }
}

impl Add for Zp {
    type Output = Zp;
    fn add(self, o: Zp) -> Zp {
        let s = self.0 + o.0;
        Zp(if s >= Self::P { s - Self::P } else { s })
    }
}

impl Sub for Zp {
    type Output = Zp;
    fn sub(self, o: Zp) -> Zp {
        Zp(if self.0 >= o.0 { self.0 - o.0 } else { self.0 + Self::P - o.0 })
    }
}

impl Mul for Zp {
    type Output = Zp;
    fn mul(self, o: Zp) -> Zp {
        Zp(((self.0 as u64 * o.0 as u64) % Self::P as u64) as u32)
    }
}

impl Neg for Zp {
    type Output = Zp;
    fn neg(self) -> Zp {
        Zp(if self.0 == 0 { 0 } else { Self::P - self.0 })
    }
}

impl Coeff for Zp {
    fn zero() -> Self {
        Zp(0)
    }
    fn one() -> Self {
        Zp(1)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

/// Exponent vector over `(lambda, l1, l2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Monomial(pub [u8; NVARS]);

impl Monomial {
    pub const ONE: Monomial = Monomial([0; NVARS]);

    pub fn var(k: usize) -> Self {
        let mut e = [0; NVARS];
        e[k] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, o: &Monomial) -> Monomial {
        let mut e = self.0;
        for (a, b) in e.iter_mut().zip(o.0) {
            *a += b;
        }
        Monomial(e)
    }

    pub fn eval(&self, x: &[f64; NVARS]) -> f64 {
        let mut v = 1.0;
        for k in 0..NVARS {
            for _ in 0..self.0[k] {
                v *= x[k];
            }
        }
        v
    }

    /// Variables with nonzero exponent must be in `vars`.
    pub fn uses_only(&self, vars: &[usize]) -> bool {
        (0..NVARS).all(|k| self.0[k] == 0 || vars.contains(&k))
    }

    /// All monomials in `vars` with total degree at most `deg`, in graded
    /// reverse lexicographic order (largest first).
    pub fn all_up_to(vars: &[usize], deg: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        fn rec(vars: &[usize], left: u32, cur: &mut [u8; NVARS], out: &mut Vec<Monomial>) {
            match vars.split_first() {
                None => out.push(Monomial(*cur)),
                Some((&v, rest)) => {
                    for e in 0..=left {
                        cur[v] = e as u8;
                        rec(rest, left - e, cur, out);
                    }
                    cur[v] = 0;
                }
            }
        }
        rec(vars, deg, &mut [0; NVARS], &mut out);
        out.sort_by(|a, b| grevlex(b, a));
        out
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for k in 0..NVARS {
            let e = self.0[k];
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "{}", VAR_NAMES[k])?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// Graded reverse lexicographic comparison with `lambda > l1 > l2`.
pub fn grevlex(a: &Monomial, b: &Monomial) -> Ordering {
    match a.degree().cmp(&b.degree()) {
        Ordering::Equal => {
            for k in (0..NVARS).rev() {
                match a.0[k].cmp(&b.0[k]) {
                    Ordering::Equal => continue,
                    // smaller exponent in the last variable wins
                    o => return o.reverse(),
                }
            }
            Ordering::Equal
        }
        o => o,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poly<F: Coeff> {
    pub terms: BTreeMap<Monomial, F>,
}

impl<F: Coeff> Default for Poly<F> {
    fn default() -> Self {
        Self { terms: BTreeMap::new() }
    }
}

impl<F: Coeff> Poly<F> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: F) -> Self {
        Self::term(c, Monomial::ONE)
    }

    pub fn term(c: F, m: Monomial) -> Self {
        let mut p = Self::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    /// `c0 + sum_k c[k] * x_k`
    pub fn affine(c0: F, c: [F; NVARS]) -> Self {
        let mut p = Self::constant(c0);
        for (k, ck) in c.into_iter().enumerate() {
            p.add_term(Monomial::var(k), ck);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: F) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m).or_insert(F::zero());
        *slot = *slot + c;
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn coeff(&self, m: &Monomial) -> F {
        self.terms.get(m).copied().unwrap_or(F::zero())
    }

    pub fn scale(&self, c: F) -> Self {
        let mut p = Self::zero();
        for (m, v) in &self.terms {
            p.add_term(*m, *v * c);
        }
        p
    }

    pub fn support(&self) -> Vec<Monomial> {
        self.terms.keys().copied().collect()
    }

    pub fn map_coeffs<G: Coeff>(&self, f: impl Fn(F) -> G) -> Poly<G> {
        let mut p = Poly::zero();
        for (m, v) in &self.terms {
            p.add_term(*m, f(*v));
        }
        p
    }

    /// Substitutes `x_var = value`.
    pub fn substitute(&self, var: usize, value: F) -> Self {
        let mut p = Self::zero();
        for (m, c) in &self.terms {
            let mut e = m.0;
            let k = e[var];
            e[var] = 0;
            let mut c = *c;
            for _ in 0..k {
                c = c * value;
            }
            p.add_term(Monomial(e), c);
        }
        p
    }
}

impl<F: Coeff> Add for &Poly<F> {
    type Output = Poly<F>;
    fn add(self, o: &Poly<F>) -> Poly<F> {
        let mut p = self.clone();
        for (m, c) in &o.terms {
            p.add_term(*m, *c);
        }
        p
    }
}

impl<F: Coeff> Sub for &Poly<F> {
    type Output = Poly<F>;
    fn sub(self, o: &Poly<F>) -> Poly<F> {
        let mut p = self.clone();
        for (m, c) in &o.terms {
            p.add_term(*m, -*c);
        }
        p
    }
}

impl<F: Coeff> Mul for &Poly<F> {
    type Output = Poly<F>;
    fn mul(self, o: &Poly<F>) -> Poly<F> {
        let mut p = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                p.add_term(ma.mul(mb), *ca * *cb);
            }
        }
        p
    }
}

impl Poly<f64> {
    pub fn eval(&self, x: &[f64; NVARS]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Sum of absolute term values, the natural scale for a relative residual.
    pub fn eval_abs(&self, x: &[f64; NVARS]) -> f64 {
        self.terms.iter().map(|(m, c)| (c * m.eval(x)).abs()).sum()
    }

    pub fn gradient(&self, x: &[f64; NVARS]) -> [f64; NVARS] {
        let mut g = [0.0; NVARS];
        for (m, c) in &self.terms {
            for k in 0..NVARS {
                let e = m.0[k];
                if e == 0 {
                    continue;
                }
                let mut d = m.0;
                d[k] -= 1;
                g[k] += c * e as f64 * Monomial(d).eval(x);
            }
        }
        g
    }

    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zp_arithmetic() {
        let a = Zp::new(123_456_789);
        assert_eq!(a * a.inv(), Zp(1));
        assert_eq!(a - a, Zp(0));
        assert_eq!(a + (-a), Zp(0));
        assert_eq!(Zp::from_i64(-1), Zp(Zp::P - 1));
    }

    #[test]
    fn grevlex_order() {
        let m = |a: u8, b: u8, c: u8| Monomial([a, b, c]);
        // degree first
        assert_eq!(grevlex(&m(0, 0, 2), &m(1, 0, 0)), Ordering::Greater);
        // ties: smaller power of the last variable is larger
        assert_eq!(grevlex(&m(1, 1, 0), &m(1, 0, 1)), Ordering::Greater);
        assert_eq!(grevlex(&m(2, 0, 0), &m(1, 1, 0)), Ordering::Greater);
        let all = Monomial::all_up_to(&[0, 1, 2], 2);
        assert_eq!(all.len(), 10);
        assert_eq!(all.last(), Some(&Monomial::ONE));
        assert_eq!(all[0], m(2, 0, 0));
    }

    #[test]
    fn product_and_eval() {
        let a = Poly::affine(1.0, [2.0, 0.0, -1.0]);
        let b = Poly::affine(-1.0, [0.0, 3.0, 0.0]);
        let p = &a * &b;
        let x = [0.3, -0.7, 1.1];
        let expect = (1.0 + 0.6 - 1.1) * (-1.0 - 2.1);
        assert!((p.eval(&x) - expect).abs() < 1e-14);
        let g = p.gradient(&x);
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-8);
        }
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn substitution() {
        let p = &Poly::affine(1.0, [2.0, 1.0, 0.0]) * &Poly::affine(0.0, [1.0, 0.0, 1.0]);
        let q = p.substitute(VAR_LAMBDA, 0.5);
        let x = [0.5, 0.2, -0.3];
        assert!((q.eval(&[0.0, 0.2, -0.3]) - p.eval(&x)).abs() < 1e-15);
        assert!(q.terms.keys().all(|m| m.0[VAR_LAMBDA] == 0));
    }
}
