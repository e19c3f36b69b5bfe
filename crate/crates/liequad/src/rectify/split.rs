//! Split of the dynamics in an adapted chart: the fiber components of the
//! pushed field are affine over the base (constant matrix from the adjoint
//! action on the ideal, or a scalar base-dependent coefficient in the
//! deficient case), and the base components descend to the quotient algebra
//! presented by pushforward fields with exactly inherited constants.

use super::chart::Chart;
use super::{FieldEval, Realization, RectifyError};
use crate::lie::{StructureConstants, Subspace};
use crate::linalg::{self, RatMat, RatVec};
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCase {
    /// The ideal's dimension equals the rank of its span.
    FullRank,
    /// Two-dimensional ideal spanning a line field; the fiber equation has
    /// a base-dependent scalar coefficient.
    Deficient,
}

pub type BaseFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, RectifyError> + Send + Sync>;
pub type BaseScalarFn = Arc<dyn Fn(&[f64]) -> Result<f64, RectifyError> + Send + Sync>;

/// The reduced block system attached to a chart.
pub struct SplitSystem {
    pub case: SplitCase,
    pub r: usize,
    /// Constant fiber matrix (full-rank case): `H[j][i]` is the coefficient
    /// of the j-th fiber frame field in the bracket of the i-th fiber frame
    /// field with the dynamical field.
    pub h: DMatrix<f64>,
    pub h_exact: RatMat,
    /// Fiber forcing at the fiber origin over a base point.
    pub w: BaseFn,
    /// Scalar fiber coefficient (deficient case only).
    pub f: Option<BaseScalarFn>,
    /// Base components of the pushed dynamical field, as a function of the
    /// base coordinates.
    pub base_gamma: BaseFn,
    /// Pushforwards of the quotient representatives: the base algebra.
    pub base_fields: Vec<FieldEval>,
    pub base_constants: StructureConstants,
    /// The dynamical field expressed in the quotient basis.
    pub gamma_base_coeffs: RatVec,
    /// Kernel of the projection: fields tangent to the ideal's orbits.
    pub kernel: Subspace,
}

impl std::fmt::Debug for SplitSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SplitSystem(case={:?}, r={}, base_dim={})",
            self.case,
            self.r,
            self.base_fields.len()
        )
    }
}

/// Cached section-point solver: the point of the fiber origin over a base
/// point, `xi^{-1}(0, b)`.
struct SectionPoints {
    chart: Arc<Chart>,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl SectionPoints {
    fn new(chart: Arc<Chart>) -> Arc<SectionPoints> {
        Arc::new(SectionPoints {
            chart,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn get(&self, b: &[f64]) -> Result<Vec<f64>, RectifyError> {
        let key: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
        if let Some(z) = self.cache.lock().unwrap().get(&key) {
            return Ok(z.clone());
        }
        let mut target = vec![0.0; self.chart.r];
        target.extend_from_slice(b);
        let z = self.chart.inverse(&target)?;
        let mut cache = self.cache.lock().unwrap();
        if cache.len() > 20_000 {
            cache.clear();
        }
        cache.insert(key, z.clone());
        Ok(z)
    }
}

/// Split the dynamics of `gamma` (coefficients in the algebra basis) in the
/// given chart. Verifies the block structure at sample points.
pub fn split_gamma(
    real: &Realization,
    a: &Subspace,
    gamma: &[BigRational],
    chart: &Arc<Chart>,
) -> Result<SplitSystem, RectifyError> {
    let d = real.algebra_dim();
    let n = real.n;
    let r = chart.r;
    let constants = &real.constants;
    let case = if chart.deficient.is_some() {
        SplitCase::Deficient
    } else {
        SplitCase::FullRank
    };

    // --- constant fiber matrix from the adjoint action -------------------
    // H[j][i]: [u_i, gamma] = sum_j H[j][i] u_j for the fiber frame fields
    // u_i, which all lie in the ideal.
    let fiber_coeffs: Vec<RatVec> = (0..r)
        .map(|s| chart.frame.slots[s].coeffs.clone())
        .collect();
    let mut h_exact = vec![vec![BigRational::zero(); r]; r];
    if case == SplitCase::FullRank {
        // the fiber frame fields span the ideal as a vector space
        let basis_mat: RatMat = (0..d)
            .map(|row| fiber_coeffs.iter().map(|u| u[row].clone()).collect())
            .collect();
        for (i, u) in fiber_coeffs.iter().enumerate() {
            let w = constants.bracket_vec(u, gamma);
            let (coords, _) = linalg::solve(&basis_mat, &w).ok_or_else(|| {
                RectifyError::StructureMismatch {
                    witness: format!(
                        "bracket of fiber field {} with gamma leaves the ideal span",
                        i
                    ),
                }
            })?;
            for (j, c) in coords.iter().enumerate() {
                h_exact[j][i] = c.clone();
            }
        }
    }
    let mut h = DMatrix::<f64>::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            h[(i, j)] = linalg::rat_to_f64(&h_exact[i][j]);
        }
    }

    let sections = SectionPoints::new(chart.clone());
    let gamma_field = real.combination(gamma, "gamma");

    // --- fiber forcing and base components --------------------------------
    let fiber_slots: Vec<usize> = (0..r).collect();
    let base_slots: Vec<usize> = (r..n).collect();
    let w_fn: BaseFn = {
        let sections = sections.clone();
        let chart = chart.clone();
        let gamma_field = gamma_field.clone();
        let fiber_slots = fiber_slots.clone();
        Arc::new(move |b: &[f64]| {
            let z = sections.get(b)?;
            let v = gamma_field.eval(&z)?;
            push_slots(&chart, &z, &v, &fiber_slots)
        })
    };
    let base_gamma: BaseFn = {
        let sections = sections.clone();
        let chart = chart.clone();
        let gamma_field = gamma_field.clone();
        let base_slots = base_slots.clone();
        Arc::new(move |b: &[f64]| {
            let z = sections.get(b)?;
            let v = gamma_field.eval(&z)?;
            push_slots(&chart, &z, &v, &base_slots)
        })
    };

    // --- deficient scalar coefficient -------------------------------------
    let f_fn: Option<BaseScalarFn> = match &chart.deficient {
        None => None,
        Some(info) => {
            // [a1, gamma] lies in the ideal and is pointwise proportional
            // to a1; the ratio descends to the base.
            let bracket_coeffs = constants.bracket_vec(&info.line, gamma);
            let bracket_field = real.combination(&bracket_coeffs, "ad");
            let line_field = real.combination(&info.line, "a1");
            let sections = sections.clone();
            Some(Arc::new(move |b: &[f64]| {
                let z = sections.get(b)?;
                let bv = bracket_field.eval(&z)?;
                let lv = line_field.eval(&z)?;
                let (idx, mag) = lv
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |acc, (i, x)| {
                        if x.abs() > acc.1 {
                            (i, x.abs())
                        } else {
                            acc
                        }
                    });
                if mag < 1e-12 {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!("line field vanishes near base point {:?}", b),
                    });
                }
                Ok(bv[idx] / lv[idx])
            }))
        }
    };

    // --- quotient algebra --------------------------------------------------
    let kernel = projection_kernel(real, a, chart)?;
    let (reps, base_constants, gamma_base_coeffs) =
        quotient_constants(constants, &kernel, gamma)?;
    let base_fields = build_base_fields(real, chart, &sections, &reps)?;

    let split = SplitSystem {
        case,
        r,
        h,
        h_exact,
        w: w_fn,
        f: f_fn,
        base_gamma,
        base_fields,
        base_constants,
        gamma_base_coeffs,
        kernel,
    };
    verify_split(real, chart, gamma, &split)?;
    Ok(split)
}

/// Pushforward of a tangent vector restricted to selected slots.
fn push_slots(
    chart: &Chart,
    q: &[f64],
    v: &[f64],
    slots: &[usize],
) -> Result<Vec<f64>, RectifyError> {
    let mut out = Vec::with_capacity(slots.len());
    for &s in slots {
        let g = chart.slots[s].potential.grad(q)?;
        let mut acc = 0.0;
        for (gi, vi) in g.iter().zip(v) {
            acc += gi * vi;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Kernel of the projection: coefficient vectors whose fields are pointwise
/// tangent to the ideal's span. Solved from exact samples for symbolic
/// realizations (then certified symbolically by vanishing minors), and from
/// float samples with continued-fraction rationalization otherwise (then
/// certified as an ideal containing `a`, with sampled tangency).
fn projection_kernel(
    real: &Realization,
    a: &Subspace,
    chart: &Chart,
) -> Result<Subspace, RectifyError> {
    let d = real.algebra_dim();
    let n = real.n;
    let r = chart.r;
    let all_symbolic = real.all_symbolic();
    let candidate = if all_symbolic {
        let mut constraints: RatMat = Vec::new();
        let points = crate::lie::sample_rational_points(97, d + 6, n);
        let a_fields: Vec<crate::vfield::VectorField> = a
            .rows()
            .iter()
            .map(|row| {
                real.combination(row, "agen")
                    .as_symbolic()
                    .expect("symbolic realization")
                    .clone()
            })
            .collect();
        for p in &points {
            // exact values of the ideal generators at p
            let mut a_vals: RatMat = Vec::new();
            let mut ok = true;
            for f in &a_fields {
                let mut row = Vec::with_capacity(n);
                for c in f.components() {
                    match c.eval_rat(p) {
                        Ok(v) => row.push(v),
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
                a_vals.push(row);
            }
            if !ok {
                continue;
            }
            // directions annihilating the span of the ideal at p
            let normals = linalg::kernel(&a_vals);
            for u in &normals {
                let mut row = Vec::with_capacity(d);
                let mut ok_row = true;
                for f in &real.fields {
                    let fv = f.as_symbolic().expect("symbolic");
                    let mut dot = BigRational::zero();
                    for (c, ui) in fv.components().iter().zip(u) {
                        match c.eval_rat(p) {
                            Ok(v) => dot += v * ui,
                            Err(_) => {
                                ok_row = false;
                                break;
                            }
                        }
                    }
                    if !ok_row {
                        break;
                    }
                    row.push(dot);
                }
                if ok_row {
                    constraints.push(row);
                }
            }
        }
        Subspace::from_rows(d, linalg::kernel(&constraints))
    } else {
        // float sampling + rationalization
        let samples = chart.bx.samples(131, 30);
        let mut constraints: Vec<Vec<f64>> = Vec::new();
        for q in &samples {
            let mut a_vals: Vec<Vec<f64>> = Vec::new();
            for row in a.rows() {
                a_vals.push(real.combination(row, "agen").eval(q)?);
            }
            let normals = float_kernel(&a_vals);
            for u in &normals {
                let mut row = Vec::with_capacity(d);
                for f in &real.fields {
                    let fv = f.eval(q)?;
                    row.push(fv.iter().zip(u).map(|(x, y)| x * y).sum());
                }
                constraints.push(row);
            }
        }
        let null = float_kernel(&constraints);
        let mut rows: RatMat = Vec::new();
        for v in &null {
            let exact: Option<RatVec> = v
                .iter()
                .map(|&x| {
                    linalg::rationalize(if x.abs() < 1e-9 { 0.0 } else { x }, 1_000_000)
                })
                .collect();
            match exact {
                Some(row) => rows.push(row),
                None => {
                    return Err(RectifyError::StructureMismatch {
                        witness: "projection kernel could not be rationalized".into(),
                    })
                }
            }
        }
        Subspace::from_rows(d, rows)
    };

    // certificates
    if !candidate.contains(a) {
        return Err(RectifyError::StructureMismatch {
            witness: "projection kernel does not contain the ideal".into(),
        });
    }
    if !candidate.is_ideal(&real.constants) {
        return Err(RectifyError::StructureMismatch {
            witness: "projection kernel is not an ideal".into(),
        });
    }
    if all_symbolic {
        // symbolic certificate: each kernel field is pointwise inside the
        // span of the ideal generators (all (r+1)-minors vanish)
        let a_exprs: Vec<Vec<crate::expr::ScalarExpr>> = a
            .rows()
            .iter()
            .map(|row| {
                real.combination(row, "agen")
                    .as_symbolic()
                    .unwrap()
                    .components()
                    .to_vec()
            })
            .collect();
        for krow in candidate.rows() {
            let kf = real.combination(krow, "ker");
            let kexprs = kf.as_symbolic().unwrap().components().to_vec();
            if !minors_vanish(&a_exprs, &kexprs, r) {
                return Err(RectifyError::StructureMismatch {
                    witness: "kernel candidate is not tangent to the ideal span".into(),
                });
            }
        }
    } else {
        // sampled tangency residual
        for q in chart.bx.samples(211, 20) {
            let mut a_vals: Vec<Vec<f64>> = Vec::new();
            for row in a.rows() {
                a_vals.push(real.combination(row, "agen").eval(&q)?);
            }
            for krow in candidate.rows() {
                let kv = real.combination(krow, "ker").eval(&q)?;
                let res = tangency_residual(&a_vals, &kv);
                if res > 1e-7 {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!("kernel tangency residual {:.3e} at {:?}", res, q),
                    });
                }
            }
        }
    }
    Ok(candidate)
}

/// All (r+1)-minors of the ideal generators stacked with one more field
/// vanish identically.
fn minors_vanish(
    a_exprs: &[Vec<crate::expr::ScalarExpr>],
    extra: &[crate::expr::ScalarExpr],
    r: usize,
) -> bool {
    let mut rows: Vec<&[crate::expr::ScalarExpr]> = a_exprs.iter().map(|v| v.as_slice()).collect();
    rows.push(extra);
    let n = extra.len();
    let k = r + 1;
    if rows.len() < k {
        return true;
    }
    // minors that include the extra row are enough: the generator rows have
    // rank at most r by construction
    let row_sets = combinations(rows.len() - 1, k - 1);
    let col_sets = combinations(n, k);
    for rs in &row_sets {
        let mut chosen: Vec<&[crate::expr::ScalarExpr]> =
            rs.iter().map(|&i| rows[i]).collect();
        chosen.push(extra);
        for cs in &col_sets {
            if !expr_det(&chosen, cs).is_zero() {
                return false;
            }
        }
    }
    true
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn expr_det(
    rows: &[&[crate::expr::ScalarExpr]],
    cols: &[usize],
) -> crate::expr::ScalarExpr {
    let k = cols.len();
    let coords = rows[0][0].coords().clone();
    if k == 1 {
        return rows[0][cols[0]].clone();
    }
    let mut acc = crate::expr::ScalarExpr::zero(&coords);
    for (i, &c) in cols.iter().enumerate() {
        let minor_rows: Vec<&[crate::expr::ScalarExpr]> = rows[1..].to_vec();
        let minor_cols: Vec<usize> = cols
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &cc)| cc)
            .collect();
        let minor = expr_det(&minor_rows, &minor_cols);
        let term = rows[0][c].mul(&minor);
        if i % 2 == 0 {
            acc = acc.add(&term);
        } else {
            acc = acc.sub(&term);
        }
    }
    acc
}

fn float_kernel(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let cols = rows[0].len();
    let mut m = nalgebra::DMatrix::<num_complex::Complex64>::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            m[(i, j)] = num_complex::Complex64::new(x, 0.0);
        }
    }
    linalg::kernel_complex(&m, 1e-9)
        .into_iter()
        .map(|v| v.into_iter().map(|c| c.re).collect())
        .collect()
}

fn tangency_residual(a_vals: &[Vec<f64>], v: &[f64]) -> f64 {
    // least-squares residual of v against the span of a_vals
    let n = v.len();
    let k = a_vals.len();
    let a = nalgebra::DMatrix::<f64>::from_fn(n, k, |i, j| a_vals[j][i]);
    let b = nalgebra::DVector::<f64>::from_row_slice(v);
    let svd = a.svd(true, true);
    match svd.solve(&b, 1e-12) {
        Ok(x) => {
            let recon = nalgebra::DMatrix::<f64>::from_fn(n, k, |i, j| a_vals[j][i]) * x;
            (&b - recon).abs().max() / (1.0 + b.abs().max())
        }
        Err(_) => f64::INFINITY,
    }
}

/// Quotient representatives, quotient constants and the image of gamma.
fn quotient_constants(
    constants: &StructureConstants,
    kernel: &Subspace,
    gamma: &[BigRational],
) -> Result<(Vec<usize>, StructureConstants, RatVec), RectifyError> {
    let d = constants.dim();
    let mut reps: Vec<usize> = Vec::new();
    let mut span = kernel.clone();
    for i in 0..d {
        let mut e = vec![BigRational::zero(); d];
        e[i] = BigRational::one();
        if !span.contains_vec(&e) {
            span = span.sum(&Subspace::span_of(d, &e));
            reps.push(i);
        }
    }
    let b = reps.len();
    // decomposition matrix: columns are kernel rows then representative units
    let cols = kernel.dim() + b;
    let mut mat: RatMat = vec![vec![BigRational::zero(); cols]; d];
    for (j, krow) in kernel.rows().iter().enumerate() {
        for i in 0..d {
            mat[i][j] = krow[i].clone();
        }
    }
    for (j, &rep) in reps.iter().enumerate() {
        mat[rep][kernel.dim() + j] = BigRational::one();
    }
    let decompose = |v: &[BigRational]| -> Result<RatVec, RectifyError> {
        let (sol, _) = linalg::solve(&mat, &v.to_vec()).ok_or_else(|| {
            RectifyError::StructureMismatch {
                witness: "vector not decomposable over kernel and representatives".into(),
            }
        })?;
        Ok(sol[kernel.dim()..].to_vec())
    };

    let mut cbar = vec![vec![vec![BigRational::zero(); b]; b]; b];
    for (ai, &ra) in reps.iter().enumerate() {
        for (bi, &rb) in reps.iter().enumerate() {
            if ai == bi {
                continue;
            }
            let mut ea = vec![BigRational::zero(); d];
            ea[ra] = BigRational::one();
            let mut eb = vec![BigRational::zero(); d];
            eb[rb] = BigRational::one();
            let w = constants.bracket_vec(&ea, &eb);
            let coords = decompose(&w)?;
            for (k, c) in coords.iter().enumerate() {
                cbar[ai][bi][k] = c.clone();
            }
        }
    }
    let names = reps
        .iter()
        .map(|&i| format!("q_{}", constants.names()[i]))
        .collect();
    let base_constants = StructureConstants::new(names, cbar)
        .map_err(|e| RectifyError::StructureMismatch {
            witness: format!("quotient constants invalid: {}", e),
        })?;
    let gamma_base = decompose(gamma)?;
    Ok((reps, base_constants, gamma_base))
}

/// Pushforward fields of the quotient representatives, symbolic when the
/// chart permits rewriting in the base coordinates, numeric otherwise.
fn build_base_fields(
    real: &Realization,
    chart: &Arc<Chart>,
    sections: &Arc<SectionPoints>,
    reps: &[usize],
) -> Result<Vec<FieldEval>, RectifyError> {
    let n = real.n;
    let r = chart.r;
    let base_dim = n - r;
    if base_dim == 0 {
        return Ok(Vec::new());
    }
    if let Some(fields) = try_symbolic_base_fields(real, chart, reps)? {
        return Ok(fields);
    }
    let mut out = Vec::with_capacity(reps.len());
    let base_slots: Vec<usize> = (r..n).collect();
    for &rep in reps {
        let mut coeffs = vec![BigRational::zero(); real.algebra_dim()];
        coeffs[rep] = BigRational::one();
        let field = real.combination(&coeffs, &format!("rep{}", rep));
        let chart = chart.clone();
        let sections = sections.clone();
        let base_slots = base_slots.clone();
        let name = format!("push_{}", field.name());
        let func = move |b: &[f64]| -> Result<Vec<f64>, RectifyError> {
            let z = sections.get(b)?;
            let v = field.eval(&z)?;
            push_slots(&chart, &z, &v, &base_slots)
        };
        out.push(FieldEval::numeric(base_dim, name, Arc::new(func)));
    }
    Ok(out)
}

/// Symbolic pushforwards exist when the base-slot gradients are exact
/// rational rows and every pushforward component can be rewritten in the
/// base coordinates: it is constant, or depends only on original
/// coordinates that coincide with base potentials up to a shift.
fn try_symbolic_base_fields(
    real: &Realization,
    chart: &Chart,
    reps: &[usize],
) -> Result<Option<Vec<FieldEval>>, RectifyError> {
    use crate::expr::{poly::Poly, CoordinateSystem, ScalarExpr};
    let n = real.n;
    let r = chart.r;
    let base_dim = n - r;
    if !real.all_symbolic() {
        return Ok(None);
    }
    // gradients of base slots as exact rational rows
    let mut grads: Vec<Vec<ScalarExpr>> = Vec::new();
    for s in r..n {
        match chart.slots[s]
            .potential
            .symbolic()
            .and_then(|sp| sp.gradient_exprs())
        {
            Some(g) => grads.push(g),
            None => return Ok(None),
        }
    }
    // shift map: base slot s corresponds to original coordinate j when its
    // potential is exactly x_j - c
    let mut shift: HashMap<usize, (usize, BigRational)> = HashMap::new(); // orig var -> (base index, offset)
    for (bi, s) in (r..n).enumerate() {
        if let Some(sp) = chart.slots[s].potential.symbolic() {
            if sp.terms.is_empty() && sp.rat.is_polynomial() {
                let p = sp.rat.numerator();
                let sup = p.support();
                if sup.len() == 1 && p.degree_in(sup[0]) == 1 {
                    let var = sup[0];
                    let lin = p
                        .terms()
                        .find(|(m, _)| m.0[var] == 1)
                        .map(|(_, c)| c.clone());
                    if lin == Some(BigRational::one()) {
                        // offset: -constant term
                        let cst = p
                            .terms()
                            .find(|(m, _)| m.total_degree() == 0)
                            .map(|(_, c)| -c.clone())
                            .unwrap_or_else(BigRational::zero);
                        shift.insert(var, (bi, cst));
                    }
                }
            }
        }
    }
    let base_coords = CoordinateSystem::new(
        (0..base_dim).map(|i| format!("b{}", i + 1)).collect::<Vec<_>>(),
    )
    .expect("fresh base coordinates");
    // substitution arguments: original coordinate -> base polynomial
    let args: Vec<Poly> = (0..n)
        .map(|orig| match shift.get(&orig) {
            Some((bi, c)) => {
                Poly::var(base_dim, *bi).add(&Poly::constant(base_dim, c.clone()))
            }
            None => Poly::zero(base_dim),
        })
        .collect();
    let substitutable: Vec<usize> = shift.keys().cloned().collect();

    let mut out = Vec::with_capacity(reps.len());
    for &rep in reps {
        let field = match real.fields[rep].as_symbolic() {
            Some(f) => f,
            None => return Ok(None),
        };
        let mut comps: Vec<ScalarExpr> = Vec::with_capacity(base_dim);
        for g in &grads {
            // dQ^s(X) as an expression of the original coordinates
            let mut acc = ScalarExpr::zero(field.coords());
            for (gi, xi) in g.iter().zip(field.components()) {
                acc = acc.add(&gi.mul(xi));
            }
            if !acc.support().iter().all(|v| substitutable.contains(v)) {
                return Ok(None);
            }
            match acc.compose_poly(&base_coords, &args) {
                Ok(e) => comps.push(e),
                Err(_) => return Ok(None),
            }
        }
        let vf = crate::vfield::VectorField::new(
            format!("push_{}", real.constants.names()[rep]),
            comps,
        )
        .map_err(RectifyError::Field)?;
        out.push(FieldEval::symbolic(vf));
    }
    Ok(Some(out))
}

/// Sample-based verification of the split identities at tolerance 1e-8.
fn verify_split(
    real: &Realization,
    chart: &Arc<Chart>,
    gamma: &[BigRational],
    split: &SplitSystem,
) -> Result<(), RectifyError> {
    let tol = 1e-8;
    let n = real.n;
    let r = split.r;
    let gamma_field = real.combination(gamma, "gamma");
    let samples: Vec<Vec<f64>> = chart
        .bx
        .samples(977, 8)
        .into_iter()
        .map(|q| {
            q.iter()
                .zip(&chart.bx.center)
                .map(|(x, c)| c + 0.7 * (x - c))
                .collect()
        })
        .chain(std::iter::once(chart.base_point.clone()))
        .collect();
    for q in &samples {
        let qv = match chart.forward(q) {
            Ok(v) => v,
            Err(RectifyError::PathLeftDomain { .. }) => continue,
            Err(e) => return Err(e),
        };
        let b = &qv[r..];
        let v = gamma_field.eval(q)?;
        let fiber_push = push_slots(chart, q, &v, &(0..r).collect::<Vec<_>>())?;
        let w = (split.w)(b)?;
        match split.case {
            SplitCase::FullRank => {
                for j in 0..r {
                    let mut want = w[j];
                    for i in 0..r {
                        want += split.h[(j, i)] * qv[i];
                    }
                    if (fiber_push[j] - want).abs() > tol * (1.0 + want.abs()) {
                        return Err(RectifyError::StructureMismatch {
                            witness: format!(
                                "fiber component {} is {:.6e}, affine model gives {:.6e} at {:?}",
                                j, fiber_push[j], want, q
                            ),
                        });
                    }
                }
            }
            SplitCase::Deficient => {
                let f = (split.f.as_ref().unwrap())(b)?;
                let want = f * qv[0] + w[0];
                if (fiber_push[0] - want).abs() > tol * (1.0 + want.abs()) {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!(
                            "fiber component is {:.6e}, scalar model gives {:.6e} at {:?}",
                            fiber_push[0], want, q
                        ),
                    });
                }
            }
        }
        // base components are fiber-independent
        let base_push = push_slots(chart, q, &v, &(r..n).collect::<Vec<_>>())?;
        let at_section = (split.base_gamma)(b)?;
        for (x, y) in base_push.iter().zip(&at_section) {
            if (x - y).abs() > tol * (1.0 + y.abs()) {
                return Err(RectifyError::StructureMismatch {
                    witness: format!(
                        "base components vary along the fiber: {:.6e} vs {:.6e} at {:?}",
                        x, y, q
                    ),
                });
            }
        }
        // base gamma agrees with the quotient combination of base fields
        if !split.base_fields.is_empty() {
            let mut combo = vec![0.0; n - r];
            for (field, c) in split.base_fields.iter().zip(&split.gamma_base_coeffs) {
                let cv = linalg::rat_to_f64(c);
                if cv != 0.0 {
                    let fv = field.eval(b)?;
                    for (o, x) in combo.iter_mut().zip(&fv) {
                        *o += cv * x;
                    }
                }
            }
            for (x, y) in combo.iter().zip(&at_section) {
                if (x - y).abs() > tol * (1.0 + y.abs()) {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!(
                            "quotient combination {:.6e} differs from pushed gamma {:.6e}",
                            x, y
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Trace;
    use crate::rectify::chart::{build_chart, ChartOptions};
    use crate::rectify::tests::{e2_realization, six_field_realization};
    use crate::rectify::WorkBox;
    use crate::linalg::rat_i64;

    fn unit(d: usize, i: usize) -> RatVec {
        let mut v = vec![BigRational::zero(); d];
        v[i] = rat_i64(1);
        v
    }

    fn bx2() -> WorkBox {
        WorkBox::new(vec![0.0, 0.0], 2.0)
    }

    #[test]
    fn plane_split_is_deficient_with_f_equal_y() {
        let (real, _) = e2_realization();
        let a = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        let trace = Trace::new();
        let chart = Arc::new(
            build_chart(&real, &a, &[0.0, 0.0], &bx2(), &trace, &ChartOptions::default())
                .unwrap(),
        );
        let split = split_gamma(&real, &a, &unit(3, 2), &chart).unwrap();
        assert_eq!(split.case, SplitCase::Deficient);
        assert_eq!(split.r, 1);
        // f(b) = y(b) through the chart: base coordinate is arctan y, so
        // f(arctan y) = y = tan(b)
        let f = split.f.as_ref().unwrap();
        for y in [-0.9, -0.3, 0.0, 0.5, 1.1] {
            let b = [(y as f64).atan()];
            let got = f(&b).unwrap();
            assert!((got - y).abs() < 1e-8, "f({:?}) = {} want {}", b, got, y);
        }
        // w vanishes at the section through the origin (gamma's x-component
        // x*y is zero at x = 0)
        let w = (split.w)(&[0.3]).unwrap();
        assert!(w[0].abs() < 1e-8);
        // base dynamics: theta' = 1 in the arctan coordinate
        let g = (split.base_gamma)(&[0.4]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        // kernel is the translation ideal; quotient is one-dimensional
        assert_eq!(split.kernel.dim(), 2);
        assert_eq!(split.base_constants.dim(), 1);
        assert_eq!(split.gamma_base_coeffs, vec![rat_i64(1)]);
        // symbolic pushforward applies: the base field is the constant 1
        assert_eq!(split.base_fields.len(), 1);
        let bf = split.base_fields[0].as_symbolic().expect("symbolic pushforward");
        assert!(bf.component(0).as_constant() == Some(rat_i64(1)));
    }

    #[test]
    fn six_field_split_with_line_ideal() {
        let (real, _) = six_field_realization();
        let a = Subspace::span_of(6, &unit(6, 0));
        let trace = Trace::new();
        let chart = Arc::new(
            build_chart(&real, &a, &[0.0, 0.0], &bx2(), &trace, &ChartOptions::default())
                .unwrap(),
        );
        // gamma = x d/dx (index 2): fiber equation Q1' = Q1 + w with H = [1]
        let split = split_gamma(&real, &a, &unit(6, 2), &chart).unwrap();
        assert_eq!(split.case, SplitCase::FullRank);
        assert_eq!(split.h_exact[0][0], rat_i64(1));
        // base: gamma projects to zero
        let g = (split.base_gamma)(&[0.5]).unwrap();
        assert!(g[0].abs() < 1e-9);
        // kernel: all fields proportional to d/dx pointwise
        assert_eq!(split.kernel.dim(), 4);

        // gamma = y d/dy (index 3): base equation b' = tied to y-translation
        let split = split_gamma(&real, &a, &unit(6, 3), &chart).unwrap();
        // [d/dx, y d/dy] = 0: H = 0
        assert!(split.h_exact[0][0].is_zero());
        let g = (split.base_gamma)(&[0.5]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-8, "y d/dy pushes to b d/db");
    }

    #[test]
    fn gamma_inside_ideal_gives_zero_h_and_constant_w() {
        let (real, _) = e2_realization();
        let a = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        let trace = Trace::new();
        let chart = Arc::new(
            build_chart(&real, &a, &[0.0, 0.0], &bx2(), &trace, &ChartOptions::default())
                .unwrap(),
        );
        // gamma = X1 lies in the ideal: the deficient coefficient vanishes
        // ([X1, X1] = 0 along the chosen line) and w is constant 1
        let split = split_gamma(&real, &a, &unit(3, 0), &chart).unwrap();
        let f = split.f.as_ref().unwrap();
        for b in [-0.5, 0.0, 0.7] {
            assert!(f(&[b]).unwrap().abs() < 1e-9);
            let w = (split.w)(&[b]).unwrap();
            assert!((w[0] - 1.0).abs() < 1e-8);
            let g = (split.base_gamma)(&[b]).unwrap();
            assert!(g[0].abs() < 1e-9);
        }
    }
}
