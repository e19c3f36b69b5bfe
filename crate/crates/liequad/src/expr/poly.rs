//! Multivariate polynomials with exact rational coefficients.
//!
//! Terms are kept in a map ordered by graded lexicographic monomial order,
//! which makes the leading term and the canonical printed form deterministic.
//! The GCD is a primitive pseudo-remainder sequence over the recursively
//! chosen main variable; it is exact and only intended for the small degrees
//! and variable counts that coefficient functions of vector fields need.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector of a single monomial. Ordered by total degree first,
/// then lexicographically on the exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Componentwise quotient; `None` when any exponent would go negative.
    fn try_div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return None;
            }
            out.push(a - b);
        }
        Some(Monomial(out))
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial over the rationals in a fixed number of variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Poly {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Poly {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Monomial(vec![0; nvars]), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Poly {
        Poly::constant(nvars, BigRational::one())
    }

    pub fn var(nvars: usize, i: usize) -> Poly {
        assert!(i < nvars);
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(Monomial(exps), BigRational::one());
        p
    }

    pub fn from_terms(nvars: usize, terms: Vec<(Vec<u32>, BigRational)>) -> Poly {
        let mut p = Poly::zero(nvars);
        for (exps, c) in terms {
            assert_eq!(exps.len(), nvars);
            p.add_term(Monomial(exps), c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .next()
                .map(|(m, c)| m.total_degree() == 0 && c.is_one())
                .unwrap_or(false)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() <= 1 && self.total_degree() == 0
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.is_zero() {
            Some(BigRational::zero())
        } else if self.is_constant() {
            self.terms.values().next().cloned()
        } else {
            None
        }
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.total_degree())
            .max()
            .unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|m| m.0[var]).max().unwrap_or(0)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.0[var] > 0)
    }

    /// Indices of variables that actually occur.
    pub fn support(&self) -> Vec<usize> {
        (0..self.nvars).filter(|&i| self.depends_on(i)).collect()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn pow(&self, mut e: u32) -> Poly {
        let mut base = self.clone();
        let mut acc = Poly::one(self.nvars);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[var] = e - 1;
            out.add_term(
                Monomial(exps),
                c * BigRational::from_integer(BigInt::from(e)),
            );
        }
        out
    }

    pub fn eval_f64(&self, p: &[f64]) -> f64 {
        assert_eq!(p.len(), self.nvars);
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.to_f64().unwrap_or(f64::NAN);
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= p[i].powi(e as i32);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_rat(&self, p: &[BigRational]) -> BigRational {
        assert_eq!(p.len(), self.nvars);
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    t *= &p[i];
                }
            }
            acc += t;
        }
        acc
    }

    /// Replace variable `var` by the rational constant `value`.
    pub fn substitute_const(&self, var: usize, value: &BigRational) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            let mut coeff = c.clone();
            for _ in 0..e {
                coeff *= value;
            }
            let mut exps = m.0.clone();
            exps[var] = 0;
            out.add_term(Monomial(exps), coeff);
        }
        out
    }

    /// Evaluate the polynomial at polynomial arguments (one per variable).
    pub fn compose(&self, args: &[Poly]) -> Poly {
        assert_eq!(args.len(), self.nvars);
        let out_vars = args.first().map(|a| a.nvars).unwrap_or(self.nvars);
        let mut acc = Poly::zero(out_vars);
        for (m, c) in &self.terms {
            let mut t = Poly::constant(out_vars, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t = t.mul(&args[i].pow(e));
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    pub fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coeff(&self) -> BigRational {
        self.leading()
            .map(|(_, c)| c.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Divide by the leading coefficient so it becomes 1.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => self.clone(),
            Some((_, c)) => self.scale(&c.recip()),
        }
    }

    /// Exact division; `None` when `other` does not divide `self`.
    pub fn div_exact(&self, other: &Poly) -> Option<Poly> {
        assert_eq!(self.nvars, other.nvars);
        if other.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Poly::zero(self.nvars));
        }
        let (lm, lc) = other.leading().expect("nonzero divisor");
        let lm = lm.clone();
        let lc = lc.clone();
        let mut rem = self.clone();
        let mut quot = Poly::zero(self.nvars);
        while !rem.is_zero() {
            let (rm, rc) = rem.leading().expect("nonzero remainder");
            let qm = rm.try_div(&lm)?;
            let qc = rc / &lc;
            let mut step = Poly::zero(self.nvars);
            step.terms.insert(qm, qc);
            rem = rem.sub(&step.mul(other));
            quot = quot.add(&step);
        }
        Some(quot)
    }

    /// Coefficient of `var^deg`, as a polynomial in the remaining variables.
    fn coeff_of(&self, var: usize, deg: u32) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            if m.0[var] == deg {
                let mut exps = m.0.clone();
                exps[var] = 0;
                out.add_term(Monomial(exps), c.clone());
            }
        }
        out
    }

    fn mul_var_pow(&self, var: usize, deg: u32) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let mut exps = m.0.clone();
            exps[var] += deg;
            out.terms.insert(Monomial(exps), c.clone());
        }
        out
    }

    fn content_in(&self, var: usize) -> Poly {
        let mut content = Poly::zero(self.nvars);
        for d in 0..=self.degree_in(var) {
            let c = self.coeff_of(var, d);
            if !c.is_zero() {
                content = gcd(&content, &c);
            }
        }
        content
    }

    fn pseudo_rem(&self, other: &Poly, var: usize) -> Poly {
        let n = other.degree_in(var);
        let lc_g = other.coeff_of(var, n);
        let mut r = self.clone();
        while !r.is_zero() && r.degree_in(var) >= n {
            let m = r.degree_in(var);
            let lc_r = r.coeff_of(var, m);
            r = lc_g
                .mul(&r)
                .sub(&lc_r.mul(&other.mul_var_pow(var, m - n)));
            debug_assert!(r.is_zero() || r.degree_in(var) < m);
        }
        r
    }
}

/// GCD of two polynomials, normalized to have leading coefficient 1.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    assert_eq!(a.nvars(), b.nvars());
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    // Main variable: the highest-index variable either polynomial uses.
    let var = (0..a.nvars())
        .rev()
        .find(|&v| a.depends_on(v) || b.depends_on(v));
    let var = match var {
        None => return Poly::one(a.nvars()),
        Some(v) => v,
    };
    let ca = a.content_in(var);
    let cb = b.content_in(var);
    let pa = a.div_exact(&ca).expect("content divides");
    let pb = b.div_exact(&cb).expect("content divides");
    let cd = gcd(&ca, &cb);

    let (mut f, mut g) = if pa.degree_in(var) >= pb.degree_in(var) {
        (pa, pb)
    } else {
        (pb, pa)
    };
    while !g.is_zero() {
        let r = f.pseudo_rem(&g, var);
        f = g;
        g = if r.is_zero() {
            r
        } else {
            let c = r.content_in(var);
            r.div_exact(&c).expect("content divides")
        };
    }
    let fc = f.content_in(var);
    let f = f.div_exact(&fc).expect("content divides");
    cd.mul(&f).monic()
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        // Highest monomial first.
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || m.total_degree() == 0 {
                factors.push(format!("{}", abs));
            }
            for (i, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    factors.push(format!("v{}", i));
                } else if e > 1 {
                    factors.push(format!("v{}^{}", i, e));
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn x() -> Poly {
        Poly::var(2, 0)
    }
    fn y() -> Poly {
        Poly::var(2, 1)
    }

    #[test]
    fn arithmetic_and_order() {
        let p = x().mul(&y()).sub(&y().mul(&x()));
        assert!(p.is_zero());
        let p = x().add(&y()).pow(2);
        let expanded = x()
            .pow(2)
            .add(&x().mul(&y()).scale(&q(2)))
            .add(&y().pow(2));
        assert_eq!(p, expanded);
        assert_eq!(p.leading().unwrap().0 .0, vec![2, 0]);
    }

    #[test]
    fn exact_division() {
        // Oracle for the rational-function cancellation below: long division.
        let num = x().pow(2).sub(&y().pow(2));
        let den = x().sub(&y());
        let q1 = num.div_exact(&den).unwrap();
        assert_eq!(q1, x().add(&y()));
        assert!(x().pow(2).add(&Poly::one(2)).div_exact(&den).is_none());
    }

    #[test]
    fn gcd_cancels_common_factor() {
        let num = x().pow(2).sub(&y().pow(2));
        let den = x().sub(&y());
        let g = gcd(&num, &den);
        assert_eq!(g, x().sub(&y()));
        // gcd of coprime polynomials is 1
        let g2 = gcd(&x().add(&Poly::one(2)), &y());
        assert!(g2.is_one());
    }

    #[test]
    fn gcd_multivariate() {
        // (x+y)*(x-2) and (x+y)*y share exactly (x+y).
        let common = x().add(&y());
        let a = common.mul(&x().sub(&Poly::constant(2, q(2))));
        let b = common.mul(&y());
        assert_eq!(gcd(&a, &b), common);
    }

    #[test]
    fn derivative_rules() {
        let p = x().pow(3).mul(&y());
        let dx = p.derivative(0);
        assert_eq!(dx, x().pow(2).mul(&y()).scale(&q(3)));
        assert!(Poly::constant(2, q(7)).derivative(1).is_zero());
    }

    #[test]
    fn eval_matches_rational() {
        let p = x().pow(2).add(&y().scale(&q(3)));
        let pt = [q(2), q(5)];
        assert_eq!(p.eval_rat(&pt), q(19));
        assert!((p.eval_f64(&[2.0, 5.0]) - 19.0).abs() < 1e-12);
    }

    #[test]
    fn compose_substitutes_polynomials() {
        // p(x, y) = x^2 + y at arguments (y, x*y)
        let p = x().pow(2).add(&y());
        let out = p.compose(&[y(), x().mul(&y())]);
        assert_eq!(out, y().pow(2).add(&x().mul(&y())));
    }
}
