//! Deterministic case generation.
//!
//! Realized cases come from a closed family of affine fields
//! `X_i = a_i (M x) + e_i` with `M^T a = 0`: the closure is exact with
//! explicitly known triangular constants and the frame determinant is
//! identically one, so the cases are transitive everywhere. A polynomial
//! triangular shear conjugates some of the realizations to exercise the
//! curved-chart machinery without changing the algebra.
//!
//! Abstract random solvable algebras for the property suite are built by
//! iterated extensions along flag-preserving derivations, which keeps the
//! Jacobi identity and a full ideal flag by construction.

use super::{CaseField, CorpusCase, Expected, ExpectedStructure, CASE_SCHEMA};
use crate::expr::poly::Poly;
use crate::expr::{CoordinateSystem, ScalarExpr};
use crate::lie::{derived_series, is_nilpotent, is_solvable, StructureConstants};
use crate::linalg::{self, RatMat, RatVec};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn small_rational(rng: &mut StdRng, allow_zero: bool) -> BigRational {
    let choices: [(i64, i64); 7] = [(0, 1), (1, 1), (-1, 1), (1, 2), (-1, 2), (2, 1), (-2, 1)];
    let lo = if allow_zero { 0 } else { 1 };
    let (n, d) = choices[rng.gen_range(lo..choices.len())];
    linalg::rat(n, d)
}

/// Deterministic solvable-and-triangular case on `R^d` with `d` fields.
///
/// The split index `m` separates pure translations (indices below `m`) from
/// fields with a linear part (indices at or above `m`); `M` is supported on
/// rows below `m` and columns at or above the row index, which makes every
/// prefix of the basis an ideal.
pub fn generate_triangular_case(seed: u64, d: usize) -> CorpusCase {
    assert!(d >= 1);
    let n = d;
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(d as u64));
    let coords: Vec<String> = (1..=n).map(|i| format!("x{}", i)).collect();
    let csys = CoordinateSystem::new(coords.clone()).expect("fresh coordinates");

    if n == 1 {
        return CorpusCase {
            schema: CASE_SCHEMA.into(),
            name: format!("triangular-s{}-d1", seed),
            coordinates: coords,
            fields: vec![CaseField {
                name: "X1".into(),
                components: vec!["1".into()],
            }],
            gamma: "X1".into(),
            initial_states: vec![vec![rng.gen_range(-0.5..0.5)]],
            t0: 0.0,
            t1: 1.0,
            steps: 50,
            expected: Some(Expected {
                tolerance: Some(1e-6),
                closed_form: None,
                structure: Some(ExpectedStructure {
                    solvable: Some(true),
                    triangular: Some(true),
                    integrable: Some(true),
                    ..Default::default()
                }),
            }),
        };
    }

    let m = rng.gen_range(1..n); // translations 0..m, linear parts m..n
    let mut a: RatVec = vec![BigRational::zero(); n];
    for item in a.iter_mut().skip(m) {
        *item = small_rational(&mut rng, true);
    }
    a[n - 1] = small_rational(&mut rng, false);

    // M upper triangular, rows only below m; M[0][0] nonzero makes the
    // algebra non-Abelian whenever some a_j pairs with it
    let mut mmat: RatMat = vec![vec![BigRational::zero(); n]; n];
    for (k, row) in mmat.iter_mut().enumerate().take(m) {
        for (_s, entry) in row.iter_mut().enumerate().skip(k) {
            if rng.gen_range(0..10) < 4 {
                *entry = small_rational(&mut rng, true);
            }
        }
    }
    mmat[0][0] = small_rational(&mut rng, false);

    // exact structure constants: [X_i, X_j] = sum_k (a_j M[k][i] - a_i M[k][j]) X_k
    let mut c = vec![vec![vec![BigRational::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..n {
                c[i][j][k] = &a[j] * &mmat[k][i] - &a[i] * &mmat[k][j];
            }
        }
    }
    let names: Vec<String> = (1..=n).map(|i| format!("X{}", i)).collect();
    let constants =
        StructureConstants::new(names.clone(), c).expect("closed family satisfies Jacobi");

    // affine realization
    let mut base_fields: Vec<Vec<Poly>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut comps = Vec::with_capacity(n);
        for (compo, mrow) in mmat.iter().enumerate() {
            // component: a_i * (M x)_compo + delta_{i, compo}
            let mut p = Poly::zero(n);
            if !a[i].is_zero() {
                for (s, entry) in mrow.iter().enumerate() {
                    if !entry.is_zero() {
                        p = p.add(&Poly::var(n, s).scale(&(&a[i] * entry)));
                    }
                }
            }
            if compo == i {
                p = p.add(&Poly::one(n));
            }
            comps.push(p);
        }
        base_fields.push(comps);
    }

    // optional polynomial triangular shear with unit Jacobian determinant
    let sheared = seed % 3 == 0 && n >= 2;
    let field_polys: Vec<Vec<Poly>> = if sheared {
        let mut shift: Vec<Poly> = Vec::with_capacity(n); // s_i(x_{i+1})
        for i in 0..n {
            if i + 1 < n {
                let c1 = small_rational(&mut rng, true);
                let c2 = if rng.gen_bool(0.5) {
                    small_rational(&mut rng, true)
                } else {
                    BigRational::zero()
                };
                let x_next = Poly::var(n, i + 1);
                shift.push(x_next.scale(&c1).add(&x_next.pow(2).scale(&half(&c2))));
            } else {
                shift.push(Poly::zero(n));
            }
        }
        // inverse by back-substitution: x_i = y_i - s_i(x_{i+1})
        let mut inverse: Vec<Poly> = vec![Poly::zero(n); n];
        for i in (0..n).rev() {
            let mut args: Vec<Poly> = (0..n).map(|k| Poly::var(n, k)).collect();
            if i + 1 < n {
                args[i + 1] = inverse[i + 1].clone();
            }
            inverse[i] = Poly::var(n, i).sub(&shift[i].compose(&args));
        }
        // pushforward: (phi_* X)_c (y) = sum_b dF_c/dx_b (G(y)) X_b(G(y))
        base_fields
            .iter()
            .map(|comps| {
                (0..n)
                    .map(|cidx| {
                        // F_c = x_c + s_c: dF_c/dx_b = delta + s_c'(x_{c+1}) delta_{b,c+1}
                        let mut acc = comps[cidx].compose(&inverse);
                        if cidx + 1 < n {
                            let ds = shift[cidx].derivative(cidx + 1);
                            if !ds.is_zero() {
                                acc = acc.add(
                                    &ds.compose(&inverse)
                                        .mul(&comps[cidx + 1].compose(&inverse)),
                                );
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    } else {
        base_fields
    };

    let fields: Vec<CaseField> = field_polys
        .iter()
        .enumerate()
        .map(|(i, comps)| CaseField {
            name: names[i].clone(),
            components: comps
                .iter()
                .map(|p| {
                    let e = ScalarExpr::from_parts(&csys, p.clone(), Poly::one(n))
                        .expect("polynomial component");
                    format!("{}", e)
                })
                .collect(),
        })
        .collect();

    // gamma: prefer a field with a linear action
    let linear_indices: Vec<usize> = (0..n).filter(|&i| !a[i].is_zero()).collect();
    let gamma_idx = if !linear_indices.is_empty() && rng.gen_range(0..10) < 7 {
        linear_indices[rng.gen_range(0..linear_indices.len())]
    } else {
        rng.gen_range(0..n)
    };

    let state_count = rng.gen_range(1..=2);
    let initial_states: Vec<Vec<f64>> = (0..state_count)
        .map(|_| {
            (0..n)
                .map(|_| (rng.gen_range(-8..=8) as f64) / 16.0)
                .collect()
        })
        .collect();

    let derived = derived_series(&constants);
    let solv = is_solvable(&constants);
    CorpusCase {
        schema: CASE_SCHEMA.into(),
        name: format!("triangular-s{}-d{}", seed, d),
        coordinates: coords,
        fields,
        gamma: names[gamma_idx].clone(),
        initial_states,
        t0: 0.0,
        t1: 1.0,
        steps: 50,
        expected: Some(Expected {
            tolerance: Some(1e-6),
            closed_form: None,
            structure: Some(ExpectedStructure {
                solvable: Some(true),
                solvable_index: solv.m,
                nilpotent: Some(is_nilpotent(&constants)),
                triangular: Some(true),
                derived_dims: Some(derived.dims),
                integrable: Some(true),
                ..Default::default()
            }),
        }),
    }
}

fn half(c: &BigRational) -> BigRational {
    c / BigRational::from_integer(2.into())
}

/// Exact presentation of a generated triangular case (convenience for tests
/// and the randomized suites).
pub fn case_presentation(
    case: &CorpusCase,
) -> Result<crate::lie::LieAlgebraPresentation, super::HarnessError> {
    case.presentation()
}

/// Random solvable structure constants of the given dimension, built by
/// iterated one-dimensional extensions along flag-preserving derivations.
/// With `nilpotent` the derivations are strictly flag-decreasing and every
/// adjoint operator is nilpotent.
pub fn generate_solvable_constants(seed: u64, dim: usize, nilpotent: bool) -> StructureConstants {
    assert!(dim >= 1);
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0xA24B_AED4).wrapping_add(dim as u64));
    let mut c: Vec<Vec<Vec<BigRational>>> = vec![vec![vec![BigRational::zero(); 1]; 1]; 1];
    let mut k = 1;
    while k < dim {
        // allowed derivation entries: D[i][j] with i <= j (flag-preserving)
        // or i < j (strict, nilpotent mode)
        let allowed: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .filter(|&(i, j)| if nilpotent { i < j } else { i <= j })
            .collect();
        // derivation condition rows: for each i<j and target component t
        let mut rows: RatMat = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let b = bracket_of(&c, i, j, k);
                for t in 0..k {
                    let mut row = vec![BigRational::zero(); allowed.len()];
                    for (col, &(p, q)) in allowed.iter().enumerate() {
                        // + D[t][q] b_q  (term D[v])
                        if p == t {
                            row[col] += &b[q];
                        }
                        // - [D e_i, e_j]_t = - D[p][i] C[p][j][t]
                        if q == i {
                            row[col] -= &c[p][j][t];
                        }
                        // - [e_i, D e_j]_t = - D[p][j] C[i][p][t]
                        if q == j {
                            row[col] -= &c[i][p][t];
                        }
                    }
                    rows.push(row);
                }
            }
        }
        let basis = if rows.is_empty() {
            // no constraints: every allowed matrix is a derivation
            (0..allowed.len())
                .map(|idx| {
                    let mut v = vec![BigRational::zero(); allowed.len()];
                    v[idx] = BigRational::one();
                    v
                })
                .collect()
        } else {
            linalg::kernel(&rows)
        };
        // random rational combination of the derivation space
        let mut d_entries = vec![BigRational::zero(); allowed.len()];
        if !basis.is_empty() {
            for b in &basis {
                let coeff = small_rational(&mut rng, true);
                if coeff.is_zero() {
                    continue;
                }
                for (e, bi) in d_entries.iter_mut().zip(b) {
                    *e += &coeff * bi;
                }
            }
            if d_entries.iter().all(|x| x.is_zero()) {
                // bias away from trivial extensions when possible
                d_entries = basis[0].clone();
            }
        }
        // extend: new generator e_k with [e_k, e_j] = D e_j
        let knew = k + 1;
        let mut cnew = vec![vec![vec![BigRational::zero(); knew]; knew]; knew];
        for i in 0..k {
            for j in 0..k {
                for t in 0..k {
                    cnew[i][j][t] = c[i][j][t].clone();
                }
            }
        }
        for (col, &(p, q)) in allowed.iter().enumerate() {
            // D[p][q] contributes to [e_k, e_q] = sum_p D[p][q] e_p
            if !d_entries[col].is_zero() {
                cnew[k][q][p] = d_entries[col].clone();
                cnew[q][k][p] = -d_entries[col].clone();
            }
        }
        c = cnew;
        k = knew;
    }
    let names = (0..dim).map(|i| format!("e{}", i)).collect();
    StructureConstants::new(names, c).expect("derivation extensions satisfy Jacobi")
}

fn bracket_of(c: &[Vec<Vec<BigRational>>], i: usize, j: usize, k: usize) -> RatVec {
    (0..k).map(|t| c[i][j][t].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::case_to_string;
    use crate::lie::{structure_constants, triangular_form_check, Subspace};

    #[test]
    fn generated_cases_are_deterministic() {
        let a = generate_triangular_case(7, 3);
        let b = generate_triangular_case(7, 3);
        assert_eq!(case_to_string(&a), case_to_string(&b));
        let c = generate_triangular_case(8, 3);
        assert_ne!(case_to_string(&a), case_to_string(&c));
    }

    #[test]
    fn one_dimensional_case_is_a_translation() {
        let case = generate_triangular_case(1, 1);
        assert_eq!(case.fields.len(), 1);
        assert_eq!(case.fields[0].components, vec!["1".to_string()]);
    }

    #[test]
    fn generated_realizations_close_with_the_declared_constants() {
        for seed in [0u64, 1, 2, 3, 4, 5] {
            for d in [2usize, 3, 4] {
                let case = generate_triangular_case(seed, d);
                let l = case.presentation().unwrap();
                let sc = structure_constants(&l).unwrap();
                // solvable and triangular by construction
                assert!(crate::lie::is_solvable(&sc).solvable, "seed {} d {}", seed, d);
                assert!(
                    triangular_form_check(&sc).triangular,
                    "seed {} d {}",
                    seed,
                    d
                );
                // expected structure block must match the analyzer exactly
                let report = crate::harness::analyze_constants(&case, &sc).unwrap();
                assert!(report.all_expectations_met, "{:?}", report.checks);
            }
        }
    }

    #[test]
    fn generated_fields_are_independent_at_their_states() {
        for seed in [0u64, 3, 6, 9] {
            let case = generate_triangular_case(seed, 3);
            let l = case.presentation().unwrap();
            for x0 in &case.initial_states {
                let rank = crate::vfield::span_rank(&l.basis, x0).unwrap();
                assert_eq!(rank, 3, "seed {}", seed);
            }
        }
    }

    #[test]
    fn random_solvable_constants_are_solvable_and_triangular() {
        for seed in 0..10u64 {
            for dim in [3usize, 4, 5, 6] {
                let c = generate_solvable_constants(seed, dim, false);
                assert!(c.jacobi_violation().is_none());
                assert!(crate::lie::is_solvable(&c).solvable);
                assert!(triangular_form_check(&c).triangular);
            }
        }
    }

    #[test]
    fn random_nilpotent_constants_are_nilpotent() {
        for seed in 0..10u64 {
            let c = generate_solvable_constants(seed, 5, true);
            assert!(crate::lie::is_nilpotent(&c));
            // nilpotent implies a-solvable for any line
            for i in 0..5 {
                let mut v = vec![BigRational::zero(); 5];
                v[i] = BigRational::one();
                let a = Subspace::span_of(5, &v);
                assert!(crate::lie::is_a_solvable(&c, &a).unwrap());
            }
        }
    }

    #[test]
    fn extensions_are_frequently_non_abelian() {
        let mut nontrivial = 0;
        for seed in 0..20u64 {
            let c = generate_solvable_constants(seed, 4, false);
            let derived = derived_series(&c);
            if derived.dims[1] > 0 {
                nontrivial += 1;
            }
        }
        assert!(nontrivial >= 10, "only {} non-Abelian out of 20", nontrivial);
    }
}
