//! Extraction of an Abelian ideal of dimension 1 or 2 from a solvable
//! algebra.
//!
//! The last nonzero derived term is an Abelian ideal; inside it, a common
//! eigenvector of the adjoint action of the whole algebra yields a line
//! (real eigenvalue) or plane (conjugate pair) that is again an ideal. The
//! eigenvector search runs over complex floats along an exact ideal flag
//! refining the derived series; every candidate is rationalized by
//! continued fractions and then re-certified exactly, so floating point can
//! only cause a miss, never a wrong answer.

use super::{derived_series, LieError, StructureConstants, Subspace};
use crate::linalg::{self, RatMat, RatVec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use std::cmp::Ordering;

/// Relative clustering tolerance for eigenvalues of restricted operators.
const EIG_CLUSTER_TOL: f64 = 1e-8;
/// Bound on denominators when rationalizing eigenvector entries.
const MAX_DENOMINATOR: u64 = 1_000_000;
/// Cap on eigenvalue-branch leaves explored by the search.
const MAX_BRANCHES: usize = 64;

/// Eigenvalue data of the adjoint action on the chosen ideal, one value per
/// basis element of the algebra.
#[derive(Debug, Clone)]
pub enum EigenData {
    Real(Vec<f64>),
    Complex(Vec<(f64, f64)>),
}

/// A certified Abelian ideal of dimension 1 or 2.
#[derive(Debug, Clone)]
pub struct AbelianIdeal {
    pub subspace: Subspace,
    /// Present when the ideal came out of the adjoint eigenvector search.
    pub eigen: Option<EigenData>,
}

struct Candidate {
    subspace: Subspace,
    eigen: Option<EigenData>,
}

/// Find an Abelian ideal of dimension at most two. Prefers dimension 1;
/// ties break on the lexicographically smallest echelon form.
pub fn abelian_ideal_le2(c: &StructureConstants) -> Result<AbelianIdeal, LieError> {
    let der = derived_series(c);
    if !der.chain.last().map(|s| s.is_zero()).unwrap_or(false) {
        return Err(LieError::NotSolvable);
    }
    let gm = der
        .chain
        .iter()
        .rev()
        .find(|s| !s.is_zero())
        .cloned()
        .unwrap_or_else(|| Subspace::full(c.dim()));

    let mut best_residual = f64::INFINITY;
    let mut candidates: Vec<Candidate> = Vec::new();

    if gm.dim() == 1 {
        candidates.push(Candidate {
            subspace: gm.clone(),
            eigen: None,
        });
    } else {
        match eigen_search(c, &der.chain, &gm, &mut best_residual) {
            Ok(found) => candidates.extend(found),
            Err(e) => {
                if gm.dim() > 2 {
                    return Err(e);
                }
            }
        }
        if gm.dim() == 2 {
            candidates.push(Candidate {
                subspace: gm.clone(),
                eigen: None,
            });
        }
    }

    // Exact certification; floating candidates that fail drop out here.
    let mut certified: Vec<Candidate> = Vec::new();
    for cand in candidates {
        if cand.subspace.dim() == 0 || cand.subspace.dim() > 2 {
            continue;
        }
        if cand.subspace.is_abelian(c) && cand.subspace.is_ideal(c) {
            if !certified.iter().any(|x| x.subspace == cand.subspace) {
                certified.push(cand);
            }
        } else {
            best_residual = best_residual.min(ideal_residual(c, &cand.subspace));
        }
    }
    certified.sort_by(|a, b| a.subspace.cmp_lex(&b.subspace));
    match certified.into_iter().next() {
        Some(cand) => Ok(AbelianIdeal {
            subspace: cand.subspace,
            eigen: cand.eigen,
        }),
        None => Err(LieError::CertificationFailed {
            residual: best_residual,
        }),
    }
}

/// Worst membership defect of `[g, S] subset S`, as a float for reporting.
fn ideal_residual(c: &StructureConstants, s: &Subspace) -> f64 {
    let d = c.dim();
    let mut worst = 0.0f64;
    for i in 0..d {
        let mut ei = vec![BigRational::zero(); d];
        ei[i] = num_traits::One::one();
        for v in s.rows() {
            let mut w = c.bracket_vec(&ei, v);
            // reduce modulo the subspace rows
            for row in s.rows() {
                let pivot = row.iter().position(|x| !x.is_zero()).unwrap_or(0);
                if !w[pivot].is_zero() {
                    let f = w[pivot].clone();
                    for (wi, ri) in w.iter_mut().zip(row) {
                        *wi -= &f * ri;
                    }
                }
            }
            for x in &w {
                worst = worst.max(x.to_f64().unwrap_or(f64::NAN).abs());
            }
        }
    }
    worst
}

/// Generators of a codimension-one ideal flag refining the derived series,
/// listed from the deepest term upward. Consecutive quotients are Abelian,
/// which is what the eigenvector induction needs.
fn flag_generators(chain: &[Subspace], d: usize) -> Vec<RatVec> {
    let mut gens: Vec<RatVec> = Vec::new();
    let mut current = Subspace::zero(d);
    // chain is descending; walk it from the deepest term to the full algebra
    for term in chain.iter().rev() {
        for row in term.rows() {
            if !current.contains_vec(row) {
                gens.push(row.clone());
                current = current.sum(&Subspace::span_of(d, row));
            }
        }
    }
    gens
}

fn eigen_search(
    c: &StructureConstants,
    derived_chain: &[Subspace],
    gm: &Subspace,
    best_residual: &mut f64,
) -> Result<Vec<Candidate>, LieError> {
    let d = c.dim();
    let r = gm.dim();

    // Exact adjoint matrices on V = gm, then float copies.
    let mut ops: Vec<DMatrix<Complex64>> = Vec::new();
    for i in 0..d {
        let mut ei = vec![BigRational::zero(); d];
        ei[i] = num_traits::One::one();
        let mut cols: Vec<RatVec> = Vec::new();
        for row in gm.rows() {
            let w = c.bracket_vec(&ei, row);
            let coords = express_in(gm, &w).ok_or(LieError::CertificationFailed {
                residual: f64::INFINITY,
            })?;
            cols.push(coords);
        }
        let mut m = DMatrix::<Complex64>::zeros(r, r);
        for (j, col) in cols.iter().enumerate() {
            for (i_row, x) in col.iter().enumerate() {
                m[(i_row, j)] = Complex64::new(x.to_f64().unwrap_or(f64::NAN), 0.0);
            }
        }
        ops.push(m);
    }

    let gens = flag_generators(derived_chain, d);
    let gen_ops: Vec<DMatrix<Complex64>> = gens
        .iter()
        .map(|g| {
            let mut m = DMatrix::<Complex64>::zeros(r, r);
            for (i, coef) in g.iter().enumerate() {
                let f = coef.to_f64().unwrap_or(0.0);
                if f != 0.0 {
                    m += &ops[i] * Complex64::new(f, 0.0);
                }
            }
            m
        })
        .collect();

    // DFS over eigenvalue clusters of each flag generator's restriction.
    let identity: Vec<Vec<Complex64>> = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    let mut leaves: Vec<Vec<Vec<Complex64>>> = Vec::new();
    let mut stack: Vec<(usize, Vec<Vec<Complex64>>)> = vec![(0, identity)];
    while let Some((depth, basis)) = stack.pop() {
        if leaves.len() >= MAX_BRANCHES {
            break;
        }
        if depth == gen_ops.len() {
            leaves.push(basis);
            continue;
        }
        let k = basis.len();
        if k == 0 {
            continue;
        }
        let restricted = restrict(&gen_ops[depth], &basis);
        let cp = linalg::char_poly(&restricted);
        let roots = linalg::poly_roots(&cp);
        let clusters = cluster(&roots);
        // Deterministic order; push in reverse so the smallest is explored first.
        for lambda in clusters.into_iter().rev() {
            let shifted = &restricted - DMatrix::<Complex64>::identity(k, k) * lambda;
            let kern = linalg::kernel_complex(&shifted, 1e-7);
            if kern.is_empty() {
                continue;
            }
            // lift kernel vectors back to V coordinates
            let lifted: Vec<Vec<Complex64>> = kern
                .iter()
                .map(|coefs| {
                    let mut v = vec![Complex64::new(0.0, 0.0); r];
                    for (b, &co) in basis.iter().zip(coefs.iter()) {
                        for (vi, bi) in v.iter_mut().zip(b) {
                            *vi += co * bi;
                        }
                    }
                    v
                })
                .collect();
            let onb = linalg::orthonormalize(&lifted);
            if !onb.is_empty() {
                stack.push((depth + 1, onb));
            }
        }
    }

    let mut out = Vec::new();
    for basis in leaves {
        if basis.is_empty() {
            continue;
        }
        let eigen = eigen_functional(&ops, &basis[0]);
        // real vectors inside the joint eigenspace give one-dimensional ideals
        if let Some(real_rows) = real_vectors(&basis) {
            for row in real_rows.iter().take(2) {
                if let Some(sub) = rationalize_rows(gm, std::slice::from_ref(row)) {
                    out.push(Candidate {
                        subspace: sub,
                        eigen: Some(EigenData::Real(
                            match &eigen {
                                EigenData::Real(v) => v.clone(),
                                EigenData::Complex(v) => v.iter().map(|x| x.0).collect(),
                            },
                        )),
                    });
                }
            }
        }
        // realified span of an eigenvector: dimension 1 or 2
        for v in basis.iter().take(2) {
            let aligned = phase_align(v);
            let re: Vec<f64> = aligned.iter().map(|z| z.re).collect();
            let im: Vec<f64> = aligned.iter().map(|z| z.im).collect();
            let mut rows = vec![re];
            if im.iter().any(|x| x.abs() > 1e-9) {
                rows.push(im);
            }
            if let Some(sub) = rationalize_rows(gm, &rows) {
                out.push(Candidate {
                    subspace: sub,
                    eigen: Some(eigen.clone()),
                });
            } else {
                *best_residual = best_residual.min(1.0);
            }
        }
    }
    if out.is_empty() {
        Err(LieError::CertificationFailed {
            residual: *best_residual,
        })
    } else {
        Ok(out)
    }
}

/// Coordinates of `v` in the row basis of `s`, when `v` lies in `s`.
fn express_in(s: &Subspace, v: &RatVec) -> Option<RatVec> {
    let rows = s.rows();
    if rows.is_empty() {
        return if v.iter().all(|x| x.is_zero()) {
            Some(Vec::new())
        } else {
            None
        };
    }
    // transpose: columns are the spanning rows
    let n = v.len();
    let a: RatMat = (0..n)
        .map(|i| rows.iter().map(|r| r[i].clone()).collect())
        .collect();
    linalg::solve(&a, v).map(|(x, _)| x)
}

fn restrict(op: &DMatrix<Complex64>, basis: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let k = basis.len();
    let r = basis[0].len();
    let mut b = DMatrix::<Complex64>::zeros(r, k);
    for (j, col) in basis.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            b[(i, j)] = x;
        }
    }
    let bh = b.adjoint();
    &bh * op * &b
}

fn cluster(roots: &[Complex64]) -> Vec<Complex64> {
    let scale = roots.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let mut sorted: Vec<Complex64> = roots.to_vec();
    sorted.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
    });
    let mut reps: Vec<Complex64> = Vec::new();
    for z in sorted {
        if !reps
            .iter()
            .any(|r| (r - z).norm() <= EIG_CLUSTER_TOL * scale)
        {
            reps.push(z);
        }
    }
    reps
}

/// Eigenvalue of each adjoint operator on the (unit) vector `v`.
fn eigen_functional(ops: &[DMatrix<Complex64>], v: &[Complex64]) -> EigenData {
    let r = v.len();
    let vv = DMatrix::from_fn(r, 1, |i, _| v[i]);
    let vals: Vec<(f64, f64)> = ops
        .iter()
        .map(|op| {
            let image = op * &vv;
            let lambda: Complex64 = (0..r).map(|i| v[i].conj() * image[(i, 0)]).sum();
            (lambda.re, lambda.im)
        })
        .collect();
    if vals.iter().all(|&(_, im)| im.abs() <= EIG_CLUSTER_TOL) {
        EigenData::Real(vals.iter().map(|&(re, _)| re).collect())
    } else {
        EigenData::Complex(vals)
    }
}

/// Real vectors contained in the complex span of `basis`, if any.
fn real_vectors(basis: &[Vec<Complex64>]) -> Option<Vec<Vec<f64>>> {
    let r = basis[0].len();
    let k = basis.len();
    // x = B c real  <=>  Im(B) Re(c) + Re(B) Im(c) = 0
    let mut m = DMatrix::<Complex64>::zeros(r, 2 * k);
    for (j, b) in basis.iter().enumerate() {
        for i in 0..r {
            m[(i, j)] = Complex64::new(b[i].im, 0.0);
            m[(i, k + j)] = Complex64::new(b[i].re, 0.0);
        }
    }
    let kern = linalg::kernel_complex(&m, 1e-9);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in kern {
        let mut x = vec![0.0f64; r];
        for (j, b) in basis.iter().enumerate() {
            let cr = c[j].re;
            let ci = c[k + j].re;
            for i in 0..r {
                x[i] += b[i].re * cr - b[i].im * ci;
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for v in x.iter_mut() {
                *v /= norm;
            }
            out.push(x);
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Rotate the phase so the largest entry is real positive; stabilizes the
/// split into real and imaginary parts.
fn phase_align(v: &[Complex64]) -> Vec<Complex64> {
    let (idx, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, z)| {
            if z.norm() > acc.1 {
                (i, z.norm())
            } else {
                acc
            }
        });
    let pivot = v[idx];
    if pivot.norm() == 0.0 {
        return v.to_vec();
    }
    let rot = pivot.conj() / pivot.norm();
    v.iter().map(|z| z * rot).collect()
}

/// Echelonize float rows in V-coordinates, rationalize the entries, and map
/// into ambient algebra coordinates. `None` when rationalization fails.
fn rationalize_rows(gm: &Subspace, rows: &[Vec<f64>]) -> Option<Subspace> {
    // float RREF with partial pivoting
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m[0].len();
    let mut r = 0;
    for c in 0..cols {
        let (best, mag) = (r..m.len())
            .map(|i| (i, m[i][c].abs()))
            .fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= 1e-9 {
            continue;
        }
        m.swap(r, best);
        let inv = 1.0 / m[r][c];
        for x in m[r].iter_mut() {
            *x *= inv;
        }
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c];
                for j in 0..cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    m.truncate(r);
    let mut exact: RatMat = Vec::new();
    for row in &m {
        let rat_row: Option<RatVec> = row
            .iter()
            .map(|&x| {
                let snapped = if x.abs() < 1e-9 { 0.0 } else { x };
                linalg::rationalize(snapped, MAX_DENOMINATOR)
            })
            .collect();
        exact.push(rat_row?);
    }
    // map to ambient coordinates: row_V * gm.rows
    let ambient = gm.ambient();
    let out: RatMat = exact
        .iter()
        .map(|row| {
            let mut v = vec![BigRational::zero(); ambient];
            for (coef, grow) in row.iter().zip(gm.rows()) {
                for (vi, gi) in v.iter_mut().zip(grow) {
                    *vi += coef * gi;
                }
            }
            v
        })
        .collect();
    Some(Subspace::from_rows(ambient, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::tests::{e2_presentation, six_field_presentation, sl2_presentation};
    use crate::lie::{structure_constants, Subspace};
    use crate::linalg::rat_i64;

    fn unit(d: usize, i: usize) -> RatVec {
        let mut v = vec![BigRational::zero(); d];
        v[i] = rat_i64(1);
        v
    }

    #[test]
    fn e2_yields_the_translation_plane() {
        let sc = structure_constants(&e2_presentation()).unwrap();
        let ideal = abelian_ideal_le2(&sc).unwrap();
        let expected = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        assert_eq!(ideal.subspace, expected);
        // the adjoint of J rotates the plane: conjugate pair +-i
        match ideal.eigen {
            Some(EigenData::Complex(vals)) => {
                assert!(vals[2].1.abs() > 0.5, "J should act with imaginary part");
            }
            other => panic!("expected complex eigen data, got {:?}", other),
        }
    }

    #[test]
    fn six_field_algebra_yields_a_line() {
        let sc = structure_constants(&six_field_presentation()).unwrap();
        let ideal = abelian_ideal_le2(&sc).unwrap();
        assert_eq!(ideal.subspace.dim(), 1);
        // the line through d/dx is an ideal and is preferred over the plane
        assert_eq!(ideal.subspace, Subspace::span_of(6, &unit(6, 0)));
        assert!(ideal.subspace.is_ideal(&sc));
    }

    #[test]
    fn non_solvable_is_rejected() {
        let sc = structure_constants(&sl2_presentation()).unwrap();
        assert!(matches!(
            abelian_ideal_le2(&sc),
            Err(LieError::NotSolvable)
        ));
    }

    #[test]
    fn one_dimensional_algebra_returns_itself() {
        let c = StructureConstants::new(
            vec!["e".into()],
            vec![vec![vec![BigRational::zero()]]],
        )
        .unwrap();
        let ideal = abelian_ideal_le2(&c).unwrap();
        assert_eq!(ideal.subspace, Subspace::full(1));
    }

    #[test]
    fn certificates_always_hold_on_output() {
        for l in [e2_presentation(), six_field_presentation()] {
            let sc = structure_constants(&l).unwrap();
            let ideal = abelian_ideal_le2(&sc).unwrap();
            assert!(ideal.subspace.is_abelian(&sc));
            assert!(ideal.subspace.is_ideal(&sc));
            assert!(ideal.subspace.dim() >= 1 && ideal.subspace.dim() <= 2);
        }
    }
}
