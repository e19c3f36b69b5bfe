//! Abstract Lie-algebra structure theory over exact rational structure
//! constants: closure extraction from a field realization, the derived,
//! central and subalgebra-relative descending series, solvability and
//! nilpotency tests, small Abelian ideals, and triangular-basis detection.
//!
//! Everything in this module is exact: subspaces are reduced row echelon
//! forms over the rationals, so series stabilization and ideal certificates
//! are decided, not estimated.

pub mod ideal;

use crate::expr::CoordinateSystem;
use crate::linalg::{self, RatMat, RatVec};
use crate::vfield::{bracket, VectorField};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

pub use ideal::{abelian_ideal_le2, AbelianIdeal, EigenData};

#[derive(Debug, Clone)]
pub enum LieError {
    /// The bracket of basis fields `i` and `j` has no constant expansion in
    /// the basis; the residual field witnesses the failure.
    NotClosed {
        i: usize,
        j: usize,
        residual: String,
    },
    /// Basis fields are linearly dependent over the constants.
    DegenerateBasis,
    NotAbelianSubalgebra,
    NotSolvable,
    /// The floating common-eigenvector search produced no subspace that
    /// passed the exact ideal certificates after rationalization.
    CertificationFailed { residual: f64 },
    /// Antisymmetry or the Jacobi identity fails for supplied constants.
    InvalidConstants(String),
    Field(crate::vfield::FieldError),
}

impl fmt::Display for LieError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LieError::NotClosed { i, j, residual } => write!(
                f,
                "bracket of basis fields {} and {} leaves the span; residual {}",
                i, j, residual
            ),
            LieError::DegenerateBasis => {
                write!(f, "basis fields are linearly dependent over constants")
            }
            LieError::NotAbelianSubalgebra => write!(f, "subspace is not an Abelian subalgebra"),
            LieError::NotSolvable => write!(f, "algebra is not solvable"),
            LieError::CertificationFailed { residual } => write!(
                f,
                "could not certify a rational Abelian ideal (best residual {:.3e})",
                residual
            ),
            LieError::InvalidConstants(msg) => write!(f, "invalid structure constants: {}", msg),
            LieError::Field(e) => write!(f, "field error: {}", e),
        }
    }
}

impl std::error::Error for LieError {}

impl From<crate::vfield::FieldError> for LieError {
    fn from(e: crate::vfield::FieldError) -> Self {
        LieError::Field(e)
    }
}

/// A Lie algebra of vector fields given by a basis of field realizations.
#[derive(Debug, Clone)]
pub struct LieAlgebraPresentation {
    pub coords: Arc<CoordinateSystem>,
    pub basis: Vec<VectorField>,
}

impl LieAlgebraPresentation {
    pub fn new(basis: Vec<VectorField>) -> Result<LieAlgebraPresentation, LieError> {
        let first = basis.first().ok_or(LieError::DegenerateBasis)?;
        let coords = first.coords().clone();
        if basis.iter().any(|f| f.coords() != &coords) {
            return Err(LieError::Field(crate::vfield::FieldError::CoordinateMismatch));
        }
        Ok(LieAlgebraPresentation { coords, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// The field with coefficient vector `v` in this basis.
    pub fn combination(&self, v: &[BigRational]) -> VectorField {
        let mut acc = VectorField::zero("combo", &self.coords);
        for (c, f) in v.iter().zip(&self.basis) {
            if !c.is_zero() {
                acc = acc.add(&f.scale(c)).expect("same coordinates");
            }
        }
        acc
    }
}

/// Structure constants `C[i][j][k]` with `[X_i, X_j] = sum_k C[i][j][k] X_k`.
/// Antisymmetry and the Jacobi identity are verified exactly on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    names: Vec<String>,
    c: Vec<Vec<Vec<BigRational>>>,
}

impl StructureConstants {
    pub fn new(names: Vec<String>, c: Vec<Vec<Vec<BigRational>>>) -> Result<Self, LieError> {
        let d = names.len();
        if c.len() != d || c.iter().any(|m| m.len() != d || m.iter().any(|r| r.len() != d)) {
            return Err(LieError::InvalidConstants("tensor has wrong shape".into()));
        }
        let sc = StructureConstants { names, c };
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    if sc.c[i][j][k] != -sc.c[j][i][k].clone() {
                        return Err(LieError::InvalidConstants(format!(
                            "antisymmetry fails at ({}, {}, {})",
                            i, j, k
                        )));
                    }
                }
            }
        }
        if let Some((i, j, k)) = sc.jacobi_violation() {
            return Err(LieError::InvalidConstants(format!(
                "Jacobi identity fails at ({}, {}, {})",
                i, j, k
            )));
        }
        Ok(sc)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entry(&self, i: usize, j: usize, k: usize) -> &BigRational {
        &self.c[i][j][k]
    }

    /// First (i, j, k) where the Jacobi identity fails, if any.
    pub fn jacobi_violation(&self) -> Option<(usize, usize, usize)> {
        let d = self.dim();
        let e = vec![BigRational::zero(); d];
        for i in 0..d {
            for j in (i + 1)..d {
                for k in (j + 1)..d {
                    let mut basis_i = e.clone();
                    basis_i[i] = BigRational::one();
                    let mut basis_j = e.clone();
                    basis_j[j] = BigRational::one();
                    let mut basis_k = e.clone();
                    basis_k[k] = BigRational::one();
                    let t1 = self.bracket_vec(&basis_i, &self.bracket_vec(&basis_j, &basis_k));
                    let t2 = self.bracket_vec(&basis_j, &self.bracket_vec(&basis_k, &basis_i));
                    let t3 = self.bracket_vec(&basis_k, &self.bracket_vec(&basis_i, &basis_j));
                    for l in 0..d {
                        let s = &t1[l] + &t2[l] + &t3[l];
                        if !s.is_zero() {
                            return Some((i, j, k));
                        }
                    }
                }
            }
        }
        None
    }

    /// Bilinear extension of the bracket to coefficient vectors.
    pub fn bracket_vec(&self, u: &[BigRational], v: &[BigRational]) -> RatVec {
        let d = self.dim();
        let mut out = vec![BigRational::zero(); d];
        for i in 0..d {
            if u[i].is_zero() {
                continue;
            }
            for j in 0..d {
                if v[j].is_zero() {
                    continue;
                }
                let f = &u[i] * &v[j];
                for k in 0..d {
                    if !self.c[i][j][k].is_zero() {
                        out[k] += &f * &self.c[i][j][k];
                    }
                }
            }
        }
        out
    }

    /// Matrix of `ad_u` acting on coefficient vectors (columns are images of
    /// basis vectors): `ad_u(v) = [u, v]`.
    pub fn ad_matrix(&self, u: &[BigRational]) -> RatMat {
        let d = self.dim();
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let mut ej = vec![BigRational::zero(); d];
            ej[j] = BigRational::one();
            cols.push(self.bracket_vec(u, &ej));
        }
        // transpose into row-major matrix with M[i][j] = (ad_u e_j)_i
        (0..d)
            .map(|i| (0..d).map(|j| cols[j][i].clone()).collect())
            .collect()
    }
}

/// Subspace of the algebra in canonical reduced-row-echelon form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subspace {
    ambient: usize,
    rows: RatMat,
}

impl Subspace {
    pub fn from_rows(ambient: usize, rows: RatMat) -> Subspace {
        for r in &rows {
            assert_eq!(r.len(), ambient, "row length must match ambient dimension");
        }
        let mut m = rows;
        linalg::rref(&mut m);
        Subspace { ambient, rows: m }
    }

    pub fn zero(ambient: usize) -> Subspace {
        Subspace {
            ambient,
            rows: Vec::new(),
        }
    }

    pub fn full(ambient: usize) -> Subspace {
        let rows = (0..ambient)
            .map(|i| {
                let mut r = vec![BigRational::zero(); ambient];
                r[i] = BigRational::one();
                r
            })
            .collect();
        Subspace { ambient, rows }
    }

    pub fn span_of(ambient: usize, v: &[BigRational]) -> Subspace {
        Subspace::from_rows(ambient, vec![v.to_vec()])
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &RatMat {
        &self.rows
    }

    pub fn contains_vec(&self, v: &[BigRational]) -> bool {
        let mut v = v.to_vec();
        for row in &self.rows {
            let pivot = row.iter().position(|x| !x.is_zero()).unwrap_or(0);
            if !v[pivot].is_zero() {
                let f = v[pivot].clone();
                for (vi, ri) in v.iter_mut().zip(row) {
                    *vi -= &f * ri;
                }
            }
        }
        v.iter().all(|x| x.is_zero())
    }

    pub fn contains(&self, other: &Subspace) -> bool {
        other.rows.iter().all(|r| self.contains_vec(r))
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        assert_eq!(self.ambient, other.ambient);
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Subspace::from_rows(self.ambient, rows)
    }

    /// Span of all brackets `[u, v]` with `u` in `self`, `v` in `other`.
    pub fn bracket_span(&self, c: &StructureConstants, other: &Subspace) -> Subspace {
        let mut rows = Vec::new();
        for u in &self.rows {
            for v in &other.rows {
                let w = c.bracket_vec(u, v);
                if w.iter().any(|x| !x.is_zero()) {
                    rows.push(w);
                }
            }
        }
        Subspace::from_rows(self.ambient, rows)
    }

    /// Deterministic total order used for tie-breaking between candidates:
    /// by dimension, then lexicographically on the echelon entries.
    pub fn cmp_lex(&self, other: &Subspace) -> Ordering {
        self.dim()
            .cmp(&other.dim())
            .then_with(|| {
                for (a, b) in self.rows.iter().zip(&other.rows) {
                    for (x, y) in a.iter().zip(b) {
                        match x.cmp(y) {
                            Ordering::Equal => {}
                            ord => return ord,
                        }
                    }
                }
                Ordering::Equal
            })
    }

    /// True when all pairwise brackets of spanning vectors vanish.
    pub fn is_abelian(&self, c: &StructureConstants) -> bool {
        for (i, u) in self.rows.iter().enumerate() {
            for v in &self.rows[i + 1..] {
                if c.bracket_vec(u, v).iter().any(|x| !x.is_zero()) {
                    return false;
                }
            }
        }
        true
    }

    /// True when `[g, self]` is contained in `self`.
    pub fn is_ideal(&self, c: &StructureConstants) -> bool {
        let d = c.dim();
        for i in 0..d {
            let mut ei = vec![BigRational::zero(); d];
            ei[i] = BigRational::one();
            for v in &self.rows {
                if !self.contains_vec(&c.bracket_vec(&ei, v)) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Derived,
    Central,
    ASeries,
    GammaSeries,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesKind::Derived => write!(f, "derived"),
            SeriesKind::Central => write!(f, "central"),
            SeriesKind::ASeries => write!(f, "a-series"),
            SeriesKind::GammaSeries => write!(f, "gamma-series"),
        }
    }
}

/// A descending series together with its stabilization data. The chain ends
/// as soon as a term repeats or hits the series' fixed floor (zero for the
/// derived and central series, the subalgebra itself for relative series).
#[derive(Debug, Clone)]
pub struct SeriesReport {
    pub kind: SeriesKind,
    pub chain: Vec<Subspace>,
    pub dims: Vec<usize>,
    pub stabilized: bool,
    /// First index whose term equals the final stabilized term.
    pub stabilization_index: usize,
}

fn run_series<F>(kind: SeriesKind, start: Subspace, floor: Subspace, step: F) -> SeriesReport
where
    F: Fn(&Subspace) -> Subspace,
{
    let mut chain = vec![start];
    loop {
        let cur = chain.last().unwrap();
        let next = step(cur);
        let stop = next == *cur || next == floor;
        chain.push(next);
        if stop {
            break;
        }
    }
    let last = chain.last().unwrap().clone();
    let stabilization_index = chain.iter().position(|s| *s == last).unwrap();
    SeriesReport {
        kind,
        dims: chain.iter().map(|s| s.dim()).collect(),
        chain,
        stabilized: true,
        stabilization_index,
    }
}

/// Derived series `g^0 = g`, `g^{k+1} = [g^k, g^k]`.
pub fn derived_series(c: &StructureConstants) -> SeriesReport {
    let d = c.dim();
    run_series(
        SeriesKind::Derived,
        Subspace::full(d),
        Subspace::zero(d),
        |cur| cur.bracket_span(c, cur),
    )
}

/// Central series `g_0 = g`, `g_{k+1} = [g, g_k]`.
pub fn central_series(c: &StructureConstants) -> SeriesReport {
    let d = c.dim();
    let full = Subspace::full(d);
    run_series(SeriesKind::Central, full.clone(), Subspace::zero(d), |cur| {
        full.bracket_span(c, cur)
    })
}

/// Series relative to an Abelian subalgebra `a`:
/// `g_a^0 = g`, `g_a^{k+1} = [g_a^k, g_a^k] + a`.
pub fn a_series(c: &StructureConstants, a: &Subspace) -> Result<SeriesReport, LieError> {
    if !a.is_abelian(c) {
        return Err(LieError::NotAbelianSubalgebra);
    }
    let d = c.dim();
    Ok(run_series(
        SeriesKind::ASeries,
        Subspace::full(d),
        a.clone(),
        |cur| cur.bracket_span(c, cur).sum(a),
    ))
}

/// The a-series for the line spanned by a single element.
pub fn gamma_series(c: &StructureConstants, gamma: &[BigRational]) -> SeriesReport {
    let a = Subspace::span_of(c.dim(), gamma);
    let mut report = a_series(c, &a).expect("a line is always an Abelian subalgebra");
    report.kind = SeriesKind::GammaSeries;
    report
}

#[derive(Debug, Clone, Copy)]
pub struct SolvabilityReport {
    pub solvable: bool,
    /// Smallest m with `g^{m+1} = 0`, when solvable.
    pub m: Option<usize>,
}

pub fn is_solvable(c: &StructureConstants) -> SolvabilityReport {
    let report = derived_series(c);
    let solvable = report.chain.last().map(|s| s.is_zero()).unwrap_or(false);
    let m = if solvable {
        Some(report.stabilization_index.saturating_sub(1))
    } else {
        None
    };
    SolvabilityReport { solvable, m }
}

pub fn is_nilpotent(c: &StructureConstants) -> bool {
    central_series(c)
        .chain
        .last()
        .map(|s| s.is_zero())
        .unwrap_or(false)
}

/// True when the a-series stabilizes exactly at `a`.
pub fn is_a_solvable(c: &StructureConstants, a: &Subspace) -> Result<bool, LieError> {
    let report = a_series(c, a)?;
    Ok(report.chain.last() == Some(a))
}

#[derive(Debug, Clone)]
pub struct TriangularReport {
    pub triangular: bool,
    /// Basis ordering realizing the triangular form, when one exists.
    pub permutation: Option<Vec<usize>>,
}

/// Search for a basis ordering in which every prefix spans an ideal, which
/// is exactly the triangular closure shape `[X_i, X_j] in <X_1..X_min(i,j)>`.
/// The search extends an ideal flag index by index rather than trying
/// permutations wholesale.
pub fn triangular_form_check(c: &StructureConstants) -> TriangularReport {
    let d = c.dim();
    fn prefix_is_ideal(c: &StructureConstants, set: &[usize]) -> bool {
        let d = c.dim();
        for &s in set {
            for j in 0..d {
                for k in 0..d {
                    if !set.contains(&k) && !c.entry(j, s, k).is_zero() {
                        return false;
                    }
                }
            }
        }
        true
    }
    fn dfs(c: &StructureConstants, chosen: &mut Vec<usize>, d: usize) -> bool {
        if chosen.len() == d {
            return true;
        }
        for cand in 0..d {
            if chosen.contains(&cand) {
                continue;
            }
            chosen.push(cand);
            if prefix_is_ideal(c, chosen) && dfs(c, chosen, d) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    let mut chosen = Vec::new();
    if dfs(c, &mut chosen, d) {
        TriangularReport {
            triangular: true,
            permutation: Some(chosen),
        }
    } else {
        TriangularReport {
            triangular: false,
            permutation: None,
        }
    }
}

/// Deterministic rational sample points in `[-3, 3]^n` (denominator 8).
pub fn sample_rational_points(seed: u64, count: usize, n: usize) -> Vec<RatVec> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| linalg::rat(rng.gen_range(-24..=24), 8))
                .collect()
        })
        .collect()
}

/// Extract structure constants from a field realization.
///
/// Constants are solved from exact evaluations at rational sample points and
/// then certified symbolically: the certificate is a canonical-form identity,
/// so sampling cannot produce a silently wrong answer.
pub fn structure_constants(l: &LieAlgebraPresentation) -> Result<StructureConstants, LieError> {
    let d = l.dim();
    let n = l.coords.dim();
    let count = d + 4;

    let mut points: Vec<RatVec> = Vec::new();
    let mut attempt = 0u64;
    let evaluation_matrix = loop {
        attempt += 1;
        if attempt > 6 {
            return Err(LieError::DegenerateBasis);
        }
        points.clear();
        let candidates = sample_rational_points(40 + attempt, 4 * count, n);
        'next_point: for p in candidates {
            for f in &l.basis {
                for comp in f.components() {
                    if comp.eval_rat(&p).is_err() {
                        continue 'next_point; // pole at the sample
                    }
                }
            }
            points.push(p);
            if points.len() == count {
                break;
            }
        }
        if points.len() < count {
            continue;
        }
        // rows indexed by (point, coordinate); columns by basis field
        let mut e: RatMat = Vec::with_capacity(count * n);
        for p in &points {
            for t in 0..n {
                let row = l
                    .basis
                    .iter()
                    .map(|f| f.component(t).eval_rat(p).expect("checked above"))
                    .collect();
                e.push(row);
            }
        }
        if linalg::rank(&e) == d {
            break e;
        }
    };

    let mut c = vec![vec![vec![BigRational::zero(); d]; d]; d];
    for i in 0..d {
        for j in (i + 1)..d {
            let b = bracket(&l.basis[i], &l.basis[j])?;
            let mut rhs = Vec::with_capacity(count * n);
            for p in &points {
                for t in 0..n {
                    rhs.push(
                        b.component(t)
                            .eval_rat(p)
                            .expect("bracket of evaluable fields"),
                    );
                }
            }
            let coeffs = match linalg::solve(&evaluation_matrix, &rhs) {
                Some((x, _unique)) => x,
                None => {
                    return Err(LieError::NotClosed {
                        i,
                        j,
                        residual: format!("{}", b),
                    })
                }
            };
            // symbolic certificate: bracket minus the expansion must vanish
            let expansion = l.combination(&coeffs);
            let residual = b.add(&expansion.scale(&-BigRational::one()))?;
            if !residual.is_zero() {
                return Err(LieError::NotClosed {
                    i,
                    j,
                    residual: format!("{}", residual),
                });
            }
            for k in 0..d {
                c[i][j][k] = coeffs[k].clone();
                c[j][i][k] = -coeffs[k].clone();
            }
        }
    }
    let names = l.basis.iter().map(|f| f.name.clone()).collect();
    StructureConstants::new(names, c)
}
