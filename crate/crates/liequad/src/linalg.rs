//! Small dense linear algebra helpers used across the crate:
//! exact Gaussian elimination over the rationals, continued-fraction
//! rationalization of floats, and just enough complex eigen machinery
//! (characteristic polynomial + Durand–Kerner roots + kernels) for the
//! common-eigenvector search on algebras of dimension at most six.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type RatVec = Vec<BigRational>;
pub type RatMat = Vec<Vec<BigRational>>;

pub fn rat_i64(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Reduced row echelon form in place; returns the pivot column per row.
/// Zero rows are removed.
pub fn rref(mat: &mut RatMat) -> Vec<usize> {
    let rows = mat.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = mat[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let pivot_row = (r..rows).find(|&i| !mat[i][c].is_zero());
        let pr = match pivot_row {
            Some(p) => p,
            None => continue,
        };
        mat.swap(r, pr);
        let inv = mat[r][c].clone().recip();
        for x in mat[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !mat[i][c].is_zero() {
                let f = mat[i][c].clone();
                for j in 0..cols {
                    let delta = &mat[r][j] * &f;
                    mat[i][j] -= delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    mat.retain(|row| row.iter().any(|x| !x.is_zero()));
    pivots
}

pub fn rank(mat: &RatMat) -> usize {
    let mut m = mat.clone();
    rref(&mut m);
    m.len()
}

/// Solve `A x = b` exactly. `None` when inconsistent; when the system is
/// underdetermined an arbitrary solution (free variables at zero) is
/// returned together with `false` for uniqueness.
pub fn solve(a: &RatMat, b: &RatVec) -> Option<(RatVec, bool)> {
    let rows = a.len();
    assert_eq!(rows, b.len());
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut aug: RatMat = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    // Inconsistent iff a pivot lands in the RHS column.
    if pivots.contains(&cols) {
        return None;
    }
    let mut x = vec![BigRational::zero(); cols];
    for (row, &pc) in aug.iter().zip(&pivots) {
        x[pc] = row[cols].clone();
    }
    Some((x, pivots.len() == cols))
}

/// Basis of the right kernel of `A`.
pub fn kernel(a: &RatMat) -> Vec<RatVec> {
    let rows = a.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = a[0].len();
    let mut m = a.clone();
    let pivots = rref(&mut m);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Vec::new();
    for &f in &free {
        let mut v = vec![BigRational::zero(); cols];
        v[f] = BigRational::one();
        for (row, &pc) in m.iter().zip(&pivots) {
            v[pc] = -row[f].clone();
        }
        basis.push(v);
    }
    basis
}

/// Continued-fraction rounding of a float to a rational with denominator
/// bounded by `max_den`.
pub fn rationalize(x: f64, max_den: u64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let negative = x < 0.0;
    let mut x = x.abs();
    let (mut p0, mut q0, mut p1, mut q1): (BigInt, BigInt, BigInt, BigInt) =
        (BigInt::one(), BigInt::zero(), BigInt::from(x.floor() as i64), BigInt::one());
    x -= x.floor();
    let bound = BigInt::from(max_den);
    for _ in 0..64 {
        if x.abs() < 1e-15 {
            break;
        }
        x = 1.0 / x;
        let a = x.floor();
        if a >= 9e18 {
            break;
        }
        let ai = BigInt::from(a as i64);
        let p2 = &ai * &p1 + &p0;
        let q2 = &ai * &q1 + &q0;
        if q2 > bound {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        x -= a;
    }
    if q1.is_zero() {
        return None;
    }
    let r = BigRational::new(p1, q1);
    Some(if negative { -r } else { r })
}

pub fn rat_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Numerical rank from singular values: rows are scaled to unit norm first,
/// then singular values below `tol` are treated as zero.
pub fn rank_f64(rows: &[Vec<f64>], tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for row in rows {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        data.extend(row.iter().map(|x| x * scale));
    }
    let m = DMatrix::from_row_slice(rows.len(), cols, &data);
    let svd = m.svd(false, false);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Characteristic polynomial coefficients of a complex matrix by the
/// Faddeev–LeVerrier recurrence: `c[0] x^n + ... + c[n]` with `c[0] = 1`.
pub fn char_poly(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    let mut aux = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=n {
        let prod = m * &aux;
        let c = -prod.trace() / Complex64::new(k as f64, 0.0);
        coeffs.push(c);
        aux = &prod + DMatrix::<Complex64>::identity(n, n) * c;
    }
    coeffs
}

/// All roots of a complex polynomial by Durand–Kerner iteration.
/// Coefficients are highest-degree first, `c[0] != 0`.
pub fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = coeffs[0];
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &monic {
            acc = acc * z + c;
        }
        acc
    };
    // Standard starting configuration on a spiral of non-real ratio.
    let radius = 1.0
        + monic[1..]
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n)
        .map(|k| seed.powu(k as u32 + 1) * radius / seed.norm())
        .collect();
    for _ in 0..200 {
        let mut max_delta = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            max_delta = max_delta.max(delta.norm());
        }
        if max_delta < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    roots
}

/// Basis of the kernel of a complex matrix, with a relative pivot tolerance.
pub fn kernel_complex(m: &DMatrix<Complex64>, tol: f64) -> Vec<Vec<Complex64>> {
    let rows = m.nrows();
    let cols = m.ncols();
    let scale = m.iter().map(|c| c.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut a = m.clone();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        // partial pivot
        let (best, mag) = (r..rows)
            .map(|i| (i, a[(i, c)].norm()))
            .fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= tol * scale {
            continue;
        }
        a.swap_rows(r, best);
        let inv = Complex64::new(1.0, 0.0) / a[(r, c)];
        for j in 0..cols {
            a[(r, j)] *= inv;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f.norm() > 0.0 {
                    for j in 0..cols {
                        let delta = a[(r, j)] * f;
                        a[(i, j)] -= delta;
                    }
                }
            }
        }
        pivots.push((r, c));
        r += 1;
        if r == rows {
            break;
        }
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for f in 0..cols {
        if pivot_cols.contains(&f) {
            continue;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); cols];
        v[f] = Complex64::new(1.0, 0.0);
        for &(pr, pc) in &pivots {
            v[pc] = -a[(pr, f)];
        }
        basis.push(v);
    }
    basis
}

/// Modified Gram–Schmidt orthonormalization of complex column vectors;
/// drops vectors that are (numerically) dependent.
pub fn orthonormalize(vectors: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for u in &out {
            let dot: Complex64 = u
                .iter()
                .zip(&w)
                .map(|(a, b)| a.conj() * b)
                .sum();
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= dot * ui;
            }
        }
        let norm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for wi in w.iter_mut() {
                *wi /= Complex64::new(norm, 0.0);
            }
            out.push(w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_and_kernel() {
        let mut m = vec![
            vec![rat_i64(1), rat_i64(2), rat_i64(3)],
            vec![rat_i64(2), rat_i64(4), rat_i64(6)],
            vec![rat_i64(0), rat_i64(1), rat_i64(1)],
        ];
        let pivots = rref(&mut m);
        assert_eq!(pivots, vec![0, 1]);
        assert_eq!(m.len(), 2);
        let a = vec![
            vec![rat_i64(1), rat_i64(2), rat_i64(3)],
            vec![rat_i64(0), rat_i64(1), rat_i64(1)],
        ];
        let k = kernel(&a);
        assert_eq!(k.len(), 1);
        // check A k = 0
        for row in &a {
            let dot: BigRational = row.iter().zip(&k[0]).map(|(x, y)| x * y).sum();
            assert!(dot.is_zero());
        }
    }

    #[test]
    fn solve_exact() {
        let a = vec![
            vec![rat_i64(2), rat_i64(1)],
            vec![rat_i64(1), rat_i64(-1)],
        ];
        let b = vec![rat_i64(5), rat_i64(1)];
        let (x, unique) = solve(&a, &b).unwrap();
        assert!(unique);
        assert_eq!(x, vec![rat_i64(2), rat_i64(1)]);
        let inconsistent = solve(
            &vec![vec![rat_i64(1), rat_i64(1)], vec![rat_i64(1), rat_i64(1)]],
            &vec![rat_i64(0), rat_i64(1)],
        );
        assert!(inconsistent.is_none());
    }

    #[test]
    fn rationalize_recovers_simple_fractions() {
        assert_eq!(rationalize(0.5, 1_000_000).unwrap(), rat(1, 2));
        assert_eq!(rationalize(-2.0 / 3.0, 1_000_000).unwrap(), rat(-2, 3));
        assert_eq!(rationalize(3.0, 10).unwrap(), rat_i64(3));
        let x = 355.0 / 113.0;
        assert_eq!(rationalize(x, 1000).unwrap(), rat(355, 113));
    }

    #[test]
    fn numeric_rank_is_scale_invariant() {
        let rows = vec![vec![1e9, 0.0], vec![1e-9, 0.0]];
        assert_eq!(rank_f64(&rows, 1e-9), 1);
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1e-3]];
        assert_eq!(rank_f64(&rows, 1e-9), 2);
        assert_eq!(rank_f64(&[vec![0.0, 0.0]], 1e-9), 0);
    }

    #[test]
    fn roots_of_quadratic() {
        // x^2 + 1 -> +-i
        let coeffs = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ];
        let mut roots = poly_roots(&coeffs);
        roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((roots[0] - Complex64::new(0.0, -1.0)).norm() < 1e-9);
        assert!((roots[1] - Complex64::new(0.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn char_poly_rotation() {
        // [[0,1],[-1,0]] has characteristic polynomial x^2 + 1.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let cp = char_poly(&m);
        assert!((cp[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(cp[1].norm() < 1e-12);
        assert!((cp[2] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn complex_kernel_of_eigen_system() {
        // (M - iI) v = 0 for M = [[0,1],[-1,0]] has kernel spanned by (1, i).
        let i = Complex64::new(0.0, 1.0);
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[-i, Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), -i],
        );
        let k = kernel_complex(&m, 1e-10);
        assert_eq!(k.len(), 1);
        let v = &k[0];
        // v1 / v0 == i
        let ratio = v[1] / v[0];
        assert!((ratio - i).norm() < 1e-9);
    }
}
