//! Expression engine for multivariate rational functions.
//!
//! A [`ScalarExpr`] is kept in canonical form at all times: a pair of expanded
//! polynomials (numerator, denominator) with exact rational coefficients,
//! reduced by their GCD, with the denominator normalized to leading
//! coefficient 1 under graded lexicographic order. Two expressions represent
//! the same rational function exactly when their canonical forms are equal,
//! which makes equality decidable and keeps closure checks exact.
//!
//! Coefficient functions stay rational by construction: differentiation and
//! the four arithmetic operations never leave the representation.

pub mod parse;
pub mod poly;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use poly::{gcd, Poly};
use std::fmt;
use std::sync::Arc;

/// Ordered list of coordinate names; fixes the dimension and the variable
/// order used by canonical forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateSystem {
    names: Vec<String>,
}

impl CoordinateSystem {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Arc<CoordinateSystem>, ExprError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ExprError::InvalidCoordinates(
                "coordinate system needs at least one name".into(),
            ));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(ExprError::InvalidCoordinates("empty coordinate name".into()));
            }
            if names[..i].contains(n) {
                return Err(ExprError::InvalidCoordinates(format!(
                    "duplicate coordinate name `{}`",
                    n
                )));
            }
        }
        Ok(Arc::new(CoordinateSystem { names }))
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Errors from parsing, construction and evaluation of expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprError {
    /// Parse failure, with a byte position into the source text.
    Syntax { pos: usize, msg: String },
    /// Identifier that is not a coordinate of the target system.
    UnknownCoordinate { pos: usize, name: String },
    /// Denominator vanished (at a point, or identically at construction).
    DivisionByZero,
    /// Operands built over different coordinate systems.
    CoordinateMismatch,
    /// Point of the wrong dimension.
    DimensionMismatch { expected: usize, got: usize },
    InvalidCoordinates(String),
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Syntax { pos, msg } => write!(f, "syntax error at {}: {}", pos, msg),
            ExprError::UnknownCoordinate { pos, name } => {
                write!(f, "unknown coordinate `{}` at {}", name, pos)
            }
            ExprError::DivisionByZero => write!(f, "division by zero"),
            ExprError::CoordinateMismatch => write!(f, "coordinate systems differ"),
            ExprError::DimensionMismatch { expected, got } => {
                write!(f, "expected a point of dimension {}, got {}", expected, got)
            }
            ExprError::InvalidCoordinates(msg) => write!(f, "invalid coordinate system: {}", msg),
        }
    }
}

impl std::error::Error for ExprError {}

/// Rational function in canonical (numerator, denominator) form.
///
/// Cancelled common factors are remembered as metadata: cancelling shrinks
/// the domain of the original expression, and the record keeps that visible
/// without affecting equality.
#[derive(Clone, Debug)]
pub struct ScalarExpr {
    coords: Arc<CoordinateSystem>,
    num: Poly,
    den: Poly,
    cancelled: Vec<Poly>,
}

impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && self.num == other.num && self.den == other.den
    }
}

impl Eq for ScalarExpr {}

impl ScalarExpr {
    fn reduced(
        coords: Arc<CoordinateSystem>,
        num: Poly,
        den: Poly,
        mut cancelled: Vec<Poly>,
    ) -> Result<ScalarExpr, ExprError> {
        if den.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(ScalarExpr {
                coords,
                num,
                den: Poly::one(den.nvars()),
                cancelled,
            });
        }
        // constant denominators and numerators cannot share a polynomial
        // factor; skipping the GCD keeps the polynomial-only pipeline cheap
        let (mut num, mut den) = if den.is_constant() || num.is_constant() {
            (num, den)
        } else {
            let g = gcd(&num, &den);
            if g.is_one() {
                (num, den)
            } else {
                let n = num.div_exact(&g).expect("gcd divides numerator");
                let d = den.div_exact(&g).expect("gcd divides denominator");
                if !g.is_constant() {
                    cancelled.push(g);
                }
                (n, d)
            }
        };
        let lc = den.leading_coeff();
        num = num.scale(&lc.recip());
        den = den.monic();
        Ok(ScalarExpr {
            coords,
            num,
            den,
            cancelled,
        })
    }

    pub fn zero(coords: &Arc<CoordinateSystem>) -> ScalarExpr {
        let n = coords.dim();
        ScalarExpr {
            coords: coords.clone(),
            num: Poly::zero(n),
            den: Poly::one(n),
            cancelled: Vec::new(),
        }
    }

    pub fn one(coords: &Arc<CoordinateSystem>) -> ScalarExpr {
        ScalarExpr::constant(coords, BigRational::from_integer(BigInt::from(1)))
    }

    pub fn constant(coords: &Arc<CoordinateSystem>, c: BigRational) -> ScalarExpr {
        let n = coords.dim();
        ScalarExpr {
            coords: coords.clone(),
            num: Poly::constant(n, c),
            den: Poly::one(n),
            cancelled: Vec::new(),
        }
    }

    pub fn constant_i64(coords: &Arc<CoordinateSystem>, c: i64) -> ScalarExpr {
        ScalarExpr::constant(coords, BigRational::from_integer(BigInt::from(c)))
    }

    pub fn coordinate(coords: &Arc<CoordinateSystem>, i: usize) -> ScalarExpr {
        let n = coords.dim();
        ScalarExpr {
            coords: coords.clone(),
            num: Poly::var(n, i),
            den: Poly::one(n),
            cancelled: Vec::new(),
        }
    }

    pub fn from_parts(
        coords: &Arc<CoordinateSystem>,
        num: Poly,
        den: Poly,
    ) -> Result<ScalarExpr, ExprError> {
        ScalarExpr::reduced(coords.clone(), num, den, Vec::new())
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        &self.coords
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    /// Common factors removed during reduction (domain shrinkage record).
    pub fn cancelled_factors(&self) -> &[Poly] {
        &self.cancelled
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// The constant value, if the expression is one.
    pub fn as_constant(&self) -> Option<BigRational> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    /// Indices of coordinates the canonical form depends on.
    pub fn support(&self) -> Vec<usize> {
        let mut s = self.num.support();
        for v in self.den.support() {
            if !s.contains(&v) {
                s.push(v);
            }
        }
        s.sort_unstable();
        s
    }

    fn check_same(&self, other: &ScalarExpr) -> Result<(), ExprError> {
        if self.coords == other.coords {
            Ok(())
        } else {
            Err(ExprError::CoordinateMismatch)
        }
    }

    pub fn add(&self, other: &ScalarExpr) -> ScalarExpr {
        self.check_same(other).expect("coordinate systems differ");
        let num = self
            .num
            .mul(&other.den)
            .add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        let mut cancelled = self.cancelled.clone();
        cancelled.extend(other.cancelled.iter().cloned());
        ScalarExpr::reduced(self.coords.clone(), num, den, cancelled)
            .expect("nonzero denominator product")
    }

    pub fn sub(&self, other: &ScalarExpr) -> ScalarExpr {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> ScalarExpr {
        ScalarExpr {
            coords: self.coords.clone(),
            num: self.num.neg(),
            den: self.den.clone(),
            cancelled: self.cancelled.clone(),
        }
    }

    pub fn mul(&self, other: &ScalarExpr) -> ScalarExpr {
        self.check_same(other).expect("coordinate systems differ");
        let mut cancelled = self.cancelled.clone();
        cancelled.extend(other.cancelled.iter().cloned());
        ScalarExpr::reduced(
            self.coords.clone(),
            self.num.mul(&other.num),
            self.den.mul(&other.den),
            cancelled,
        )
        .expect("nonzero denominator product")
    }

    pub fn scale(&self, c: &BigRational) -> ScalarExpr {
        self.mul(&ScalarExpr::constant(&self.coords, c.clone()))
    }

    /// Quotient; errors when `other` is identically zero.
    pub fn div(&self, other: &ScalarExpr) -> Result<ScalarExpr, ExprError> {
        self.check_same(other)?;
        if other.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        let mut cancelled = self.cancelled.clone();
        cancelled.extend(other.cancelled.iter().cloned());
        ScalarExpr::reduced(
            self.coords.clone(),
            self.num.mul(&other.den),
            self.den.mul(&other.num),
            cancelled,
        )
    }

    /// Integer power; negative exponents invert (error on zero base).
    pub fn powi(&self, e: i32) -> Result<ScalarExpr, ExprError> {
        if e >= 0 {
            ScalarExpr::reduced(
                self.coords.clone(),
                self.num.pow(e as u32),
                self.den.pow(e as u32),
                self.cancelled.clone(),
            )
        } else {
            if self.is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            let k = (-e) as u32;
            ScalarExpr::reduced(
                self.coords.clone(),
                self.den.pow(k),
                self.num.pow(k),
                self.cancelled.clone(),
            )
        }
    }

    /// Exact partial derivative, in canonical form.
    pub fn diff(&self, var: usize) -> ScalarExpr {
        assert!(var < self.coords.dim(), "coordinate index out of range");
        // (n/d)' = (n'od - n d')/d^2
        let num = self
            .num
            .derivative(var)
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.derivative(var)));
        let den = self.den.mul(&self.den);
        ScalarExpr::reduced(self.coords.clone(), num, den, self.cancelled.clone())
            .expect("nonzero denominator square")
    }

    pub fn diff_by_name(&self, name: &str) -> Result<ScalarExpr, ExprError> {
        match self.coords.index_of(name) {
            Some(i) => Ok(self.diff(i)),
            None => Err(ExprError::UnknownCoordinate {
                pos: 0,
                name: name.to_string(),
            }),
        }
    }

    /// Canonical form of the expression. Construction already canonicalizes,
    /// so this is the identity; it exists so idempotence is testable.
    pub fn normalize(&self) -> ScalarExpr {
        self.clone()
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        if p.len() != self.coords.dim() {
            return Err(ExprError::DimensionMismatch {
                expected: self.coords.dim(),
                got: p.len(),
            });
        }
        let d = self.den.eval_f64(p);
        if d == 0.0 {
            return Err(ExprError::DivisionByZero);
        }
        Ok(self.num.eval_f64(p) / d)
    }

    /// Exact evaluation at a rational point.
    pub fn eval_rat(&self, p: &[BigRational]) -> Result<BigRational, ExprError> {
        if p.len() != self.coords.dim() {
            return Err(ExprError::DimensionMismatch {
                expected: self.coords.dim(),
                got: p.len(),
            });
        }
        let d = self.den.eval_rat(p);
        if d.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        Ok(self.num.eval_rat(p) / d)
    }

    /// Fix one coordinate to a rational constant.
    pub fn substitute_const(&self, var: usize, value: &BigRational) -> Result<ScalarExpr, ExprError> {
        ScalarExpr::reduced(
            self.coords.clone(),
            self.num.substitute_const(var, value),
            self.den.substitute_const(var, value),
            self.cancelled.clone(),
        )
    }

    /// Substitute polynomial expressions for every coordinate; `target` is
    /// the coordinate system the result lives in. Requires a polynomial
    /// expression for each coordinate of `self`.
    pub fn compose_poly(
        &self,
        target: &Arc<CoordinateSystem>,
        args: &[Poly],
    ) -> Result<ScalarExpr, ExprError> {
        if args.len() != self.coords.dim() {
            return Err(ExprError::DimensionMismatch {
                expected: self.coords.dim(),
                got: args.len(),
            });
        }
        ScalarExpr::reduced(
            target.clone(),
            self.num.compose(args),
            self.den.compose(args),
            Vec::new(),
        )
    }

    /// Compile to a plain-f64 form for evaluation-heavy inner loops.
    pub fn compile(&self) -> CompiledExpr {
        let conv = |p: &Poly| -> Vec<(Vec<u32>, f64)> {
            p.terms()
                .map(|(m, c)| (m.0.clone(), c.to_f64().unwrap_or(f64::NAN)))
                .collect()
        };
        CompiledExpr {
            dim: self.coords.dim(),
            num: conv(&self.num),
            den: conv(&self.den),
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let render = |p: &Poly| -> String {
            let mut s = format!("{}", p);
            for (i, name) in self.coords.names().iter().enumerate() {
                s = s.replace(&format!("v{}^", i), &format!("{}^", name));
                s = s.replace(&format!("v{}*", i), &format!("{}*", name));
                // end-of-token occurrences
                s = replace_token(&s, &format!("v{}", i), name);
            }
            s
        };
        if self.den.is_one() {
            write!(f, "{}", render(&self.num))
        } else {
            write!(f, "({}) / ({})", render(&self.num), render(&self.den))
        }
    }
}

fn replace_token(s: &str, from: &str, to: &str) -> String {
    let mut out = String::new();
    let mut rest = s;
    while let Some(i) = rest.find(from) {
        let after = &rest[i + from.len()..];
        let boundary = after
            .chars()
            .next()
            .map(|c| !c.is_ascii_digit())
            .unwrap_or(true);
        if boundary {
            out.push_str(&rest[..i]);
            out.push_str(to);
            rest = after;
        } else {
            out.push_str(&rest[..i + from.len()]);
            rest = after;
        }
    }
    out.push_str(rest);
    out
}

/// Float-only snapshot of a canonical form, for hot evaluation paths.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    dim: usize,
    num: Vec<(Vec<u32>, f64)>,
    den: Vec<(Vec<u32>, f64)>,
}

impl CompiledExpr {
    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        debug_assert_eq!(p.len(), self.dim);
        let horner = |terms: &[(Vec<u32>, f64)]| -> f64 {
            let mut acc = 0.0;
            for (exps, c) in terms {
                let mut t = *c;
                for (i, &e) in exps.iter().enumerate() {
                    if e > 0 {
                        t *= p[i].powi(e as i32);
                    }
                }
                acc += t;
            }
            acc
        };
        let d = horner(&self.den);
        if d == 0.0 {
            return Err(ExprError::DivisionByZero);
        }
        Ok(horner(&self.num) / d)
    }
}

/// Parse an expression string over the given coordinates.
pub fn parse(text: &str, coords: &Arc<CoordinateSystem>) -> Result<ScalarExpr, ExprError> {
    parse::parse(text, coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn coords_xy() -> Arc<CoordinateSystem> {
        CoordinateSystem::new(vec!["x", "y"]).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn coordinate_system_rejects_duplicates() {
        assert!(CoordinateSystem::new(vec!["x", "x"]).is_err());
        assert!(CoordinateSystem::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn canonical_form_collapses_identities() {
        let c = coords_xy();
        let x = ScalarExpr::coordinate(&c, 0);
        let y = ScalarExpr::coordinate(&c, 1);
        // (x+y)^2 - x^2 - 2xy == y^2
        let lhs = x
            .add(&y)
            .powi(2)
            .unwrap()
            .sub(&x.powi(2).unwrap())
            .sub(&x.mul(&y).scale(&q(2, 1)));
        assert_eq!(lhs, y.powi(2).unwrap());
        // x*y - y*x == 0
        assert!(x.mul(&y).sub(&y.mul(&x)).is_zero());
    }

    #[test]
    fn cancellation_records_domain_note() {
        let c = coords_xy();
        let x = ScalarExpr::coordinate(&c, 0);
        let y = ScalarExpr::coordinate(&c, 1);
        // Expected value x + y computed by the polynomial-division oracle in
        // poly::tests::exact_division.
        let r = x
            .powi(2)
            .unwrap()
            .sub(&y.powi(2).unwrap())
            .div(&x.sub(&y))
            .unwrap();
        assert_eq!(r, x.add(&y));
        assert_eq!(r.cancelled_factors().len(), 1);
        // x - y, monic
        assert_eq!(r.cancelled_factors()[0], x.sub(&y).numerator().clone());
    }

    #[test]
    fn division_by_zero_expression_fails() {
        let c = coords_xy();
        let x = ScalarExpr::coordinate(&c, 0);
        let zero = x.sub(&x);
        assert_eq!(
            ScalarExpr::one(&c).div(&zero).unwrap_err(),
            ExprError::DivisionByZero
        );
    }

    #[test]
    fn eval_examples() {
        let c = coords_xy();
        let x = ScalarExpr::coordinate(&c, 0);
        let y = ScalarExpr::coordinate(&c, 1);
        let one_plus_y2 = ScalarExpr::one(&c).add(&y.powi(2).unwrap());
        assert_eq!(one_plus_y2.eval(&[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(x.mul(&y).eval(&[3.0, 2.0]).unwrap(), 6.0);
        let inv_y = ScalarExpr::one(&c).div(&y).unwrap();
        assert_eq!(inv_y.eval(&[1.0, 0.0]).unwrap_err(), ExprError::DivisionByZero);
        // exact mode
        assert_eq!(
            one_plus_y2.eval_rat(&[q(0, 1), q(1, 2)]).unwrap(),
            q(5, 4)
        );
    }

    #[test]
    fn diff_examples() {
        let c = coords_xy();
        let x = ScalarExpr::coordinate(&c, 0);
        let y = ScalarExpr::coordinate(&c, 1);
        let e = ScalarExpr::one(&c).add(&y.powi(2).unwrap());
        assert_eq!(e.diff(1), y.scale(&q(2, 1)));
        assert_eq!(x.mul(&y).diff(0), y);
        assert!(ScalarExpr::constant(&c, q(5, 3)).diff(0).is_zero());
        // quotient rule stays rational: d/dy 1/(1+y^2) = -2y/(1+y^2)^2
        let f = ScalarExpr::one(&c).div(&e).unwrap();
        let expect = y
            .scale(&q(-2, 1))
            .div(&e.powi(2).unwrap())
            .unwrap();
        assert_eq!(f.diff(1), expect);
    }

    fn random_expr(rng: &mut StdRng, c: &Arc<CoordinateSystem>, depth: usize) -> ScalarExpr {
        if depth == 0 {
            return match rng.gen_range(0..3) {
                0 => ScalarExpr::coordinate(c, rng.gen_range(0..c.dim())),
                1 => ScalarExpr::constant(c, q(rng.gen_range(-4..5), rng.gen_range(1..4))),
                _ => ScalarExpr::coordinate(c, rng.gen_range(0..c.dim())),
            };
        }
        let a = random_expr(rng, c, depth - 1);
        let b = random_expr(rng, c, depth - 1);
        match rng.gen_range(0..4) {
            0 => a.add(&b),
            1 => a.sub(&b),
            2 => a.mul(&b),
            _ => {
                if b.is_zero() {
                    a
                } else {
                    a.div(&b).unwrap()
                }
            }
        }
    }

    fn random_rat_point(rng: &mut StdRng, n: usize) -> Vec<BigRational> {
        (0..n).map(|_| q(rng.gen_range(-12..13), 4)).collect()
    }

    #[test]
    fn rational_eval_is_a_ring_homomorphism() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let a = random_expr(&mut rng, &c, 2);
            let b = random_expr(&mut rng, &c, 2);
            let p = random_rat_point(&mut rng, 2);
            let (va, vb, vs) = match (a.eval_rat(&p), b.eval_rat(&p), a.add(&b).eval_rat(&p)) {
                (Ok(x), Ok(y), Ok(z)) => (x, y, z),
                _ => continue, // pole at the sample point
            };
            assert_eq!(va + vb, vs);
            checked += 1;
        }
    }

    #[test]
    fn leibniz_rule_holds_exactly() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let a = random_expr(&mut rng, &c, 2);
            let b = random_expr(&mut rng, &c, 2);
            let var = rng.gen_range(0..2);
            let lhs = a.mul(&b).diff(var);
            let rhs = a.diff(var).mul(&b).add(&a.mul(&b.diff(var)));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..100 {
            let a = random_expr(&mut rng, &c, 2);
            let n1 = a.normalize();
            assert_eq!(n1.normalize(), n1);
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(17);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 100 {
            let e = random_expr(&mut rng, &c, 2);
            let var = rng.gen_range(0..2);
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = e.diff(var);
            let mut ph = p.clone();
            let mut pl = p.clone();
            ph[var] += h;
            pl[var] -= h;
            let (fh, fl, dv) = match (e.eval(&ph), e.eval(&pl), d.eval(&p)) {
                (Ok(a), Ok(b), Ok(v)) => (a, b, v),
                _ => continue,
            };
            let fd = (fh - fl) / (2.0 * h);
            if !fd.is_finite() || fd.abs() > 1e6 {
                continue; // too close to a pole for the difference quotient
            }
            assert!(
                (dv - fd).abs() <= 1e-6 * (1.0 + dv.abs()),
                "derivative mismatch: {} vs fd {}",
                dv,
                fd
            );
            checked += 1;
        }
    }

    #[test]
    fn equality_agrees_with_random_point_probing() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..40 {
            let a = random_expr(&mut rng, &c, 2);
            let b = random_expr(&mut rng, &c, 2);
            let diff_zero = a.sub(&b).is_zero();
            let mut all_equal = true;
            let mut tested = 0;
            for _ in 0..20 {
                let p = random_rat_point(&mut rng, 2);
                match (a.eval_rat(&p), b.eval_rat(&p)) {
                    (Ok(x), Ok(y)) => {
                        tested += 1;
                        if x != y {
                            all_equal = false;
                        }
                    }
                    _ => continue,
                }
            }
            if tested >= 5 {
                assert_eq!(diff_zero, all_equal);
            }
        }
    }

    #[test]
    fn compiled_matches_reference_eval() {
        let c = coords_xy();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let e = random_expr(&mut rng, &c, 2);
            let ce = e.compile();
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            match (e.eval(&p), ce.eval(&p)) {
                (Ok(a), Ok(b)) => assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs())),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("eval disagreement: {:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn powi_negative_inverts() {
        let c = coords_xy();
        let y = ScalarExpr::coordinate(&c, 1);
        let e = ScalarExpr::one(&c).add(&y.powi(2).unwrap());
        let inv = e.powi(-1).unwrap();
        assert!(e.mul(&inv).sub(&ScalarExpr::one(&c)).is_zero());
        assert!(ScalarExpr::zero(&c).powi(-2).is_err());
        assert!(ScalarExpr::zero(&c).powi(0).unwrap().as_constant().unwrap().is_one());
    }
}
