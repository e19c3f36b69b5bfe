//! Assembly of the adapted chart: one potential per coordinate slot, built
//! level by level from the outermost foliation inward, plus the forward
//! map, Jacobian and Newton inverse.

use super::potential::{
    integrate_row_symbolic, NumericKind, NumericPotential, Potential, PotentialRef,
    PotentialStrategy, RowEval,
};
use super::{
    choose_frame, closedness_check, ideal_distribution_ranks, Coframe, Frame, RankChain,
    Realization, RectifyError, WorkBox,
};
use crate::integrate::Trace;
use crate::lie::Subspace;
use crate::linalg::{RatMat, RatVec};
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone)]
pub struct ChartOptions {
    pub tol: f64,
    pub rank_samples: usize,
    pub verify_samples: usize,
    pub seed: u64,
    /// Skip the symbolic potential table (used by tests to exercise the
    /// numeric path machinery on cases that would otherwise be symbolic).
    pub force_numeric: bool,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            tol: 1e-10,
            rank_samples: 50,
            verify_samples: 12,
            seed: 20_240_501,
            force_numeric: false,
        }
    }
}

/// One chart coordinate: its series level, how its potential was built, and
/// the potential itself.
pub struct SlotRecord {
    pub level: usize,
    pub strategy: PotentialStrategy,
    pub potential: PotentialRef,
}

/// Chart data for a deficient ideal (dimension 2 spanning a rank-1
/// distribution): the chosen line inside the ideal.
#[derive(Debug, Clone)]
pub struct DeficientInfo {
    pub line: RatVec,
}

/// Adapted coordinates `Q` with `Q(p) = 0`: fiber slots `Q^1..Q^r` are dual
/// to frame fields inside the ideal, base slots `Q^{r+1}..Q^n` are constant
/// along the ideal's orbits.
pub struct Chart {
    pub n: usize,
    pub r: usize,
    pub base_point: Vec<f64>,
    pub bx: WorkBox,
    pub frame: Frame,
    pub coframe: Coframe,
    pub slots: Vec<SlotRecord>,
    pub a_rows: RatMat,
    pub deficient: Option<DeficientInfo>,
    trace: Trace,
    warm: Mutex<Option<(Vec<f64>, Vec<f64>)>>,
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Chart(n={}, r={}, deficient={})",
            self.n,
            self.r,
            self.deficient.is_some()
        )
    }
}

impl Chart {
    pub fn forward(&self, q: &[f64]) -> Result<Vec<f64>, RectifyError> {
        self.slots
            .iter()
            .map(|s| s.potential.eval(q))
            .collect()
    }

    /// Rows are the gradients of the slot potentials.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, RectifyError> {
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (s, slot) in self.slots.iter().enumerate() {
            let g = slot.potential.grad(q)?;
            for (j, x) in g.iter().enumerate() {
                m[(s, j)] = *x;
            }
        }
        Ok(m)
    }

    /// Pushforward of a tangent vector at `q` into chart components.
    pub fn push_vector(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>, RectifyError> {
        let j = self.jacobian(q)?;
        let mut out = vec![0.0; self.n];
        for s in 0..self.n {
            for i in 0..self.n {
                out[s] += j[(s, i)] * v[i];
            }
        }
        Ok(out)
    }

    /// Newton inverse of the forward map, warm-started from the previous
    /// query when available.
    pub fn inverse(&self, target: &[f64]) -> Result<Vec<f64>, RectifyError> {
        let guess = {
            let warm = self.warm.lock().unwrap();
            match warm.as_ref() {
                Some((_, z)) => z.clone(),
                None => self.base_point.clone(),
            }
        };
        match self.inverse_from(&guess, target) {
            Ok(z) => Ok(z),
            // retry cold from the chart center before giving up
            Err(_) => self.inverse_from(&self.base_point.clone(), target),
        }
    }

    pub fn inverse_from(&self, guess: &[f64], target: &[f64]) -> Result<Vec<f64>, RectifyError> {
        self.trace.count_newton();
        let scale = 1.0 + target.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        let mut z = guess.to_vec();
        let mut residual = self.residual(&z, target)?;
        for _ in 0..60 {
            let err = residual.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            if err <= 1e-11 * scale {
                *self.warm.lock().unwrap() = Some((target.to_vec(), z.clone()));
                return Ok(z);
            }
            let jac = self.jacobian(&z)?;
            self.trace.count_linear_solve();
            let delta = jac
                .lu()
                .solve(&DVector::from_vec(residual.clone()))
                .ok_or_else(|| RectifyError::FrameSingular { point: z.clone() })?;
            // damped update: back off while the step leaves the box or
            // fails to reduce the residual
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let mut znew = z.clone();
                for i in 0..self.n {
                    znew[i] -= step * delta[i];
                }
                if !self.bx.contains(&znew) {
                    step *= 0.5;
                    continue;
                }
                match self.residual(&znew, target) {
                    Ok(rnew) => {
                        let enew = rnew.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
                        if enew < err || step < 0.2 {
                            z = znew;
                            residual = rnew;
                            accepted = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    Err(_) => {
                        step *= 0.5;
                    }
                }
            }
            if !accepted {
                return Err(RectifyError::InversionFailed {
                    target: target.to_vec(),
                });
            }
        }
        Err(RectifyError::InversionFailed {
            target: target.to_vec(),
        })
    }

    fn residual(&self, z: &[f64], target: &[f64]) -> Result<Vec<f64>, RectifyError> {
        let f = self.forward(z)?;
        Ok(f.iter().zip(target).map(|(a, b)| a - b).collect())
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Per-slot dump records for reports: level, strategy, description.
    pub fn slot_dump(&self) -> Vec<(usize, PotentialStrategy, String)> {
        self.slots
            .iter()
            .map(|s| (s.level, s.strategy, s.potential.describe()))
            .collect()
    }
}

/// Build the adapted chart for the Abelian ideal `a` around `p`.
///
/// The series levels are processed outermost first. Rows of the outermost
/// level integrate along global axis paths; deeper rows integrate inside
/// their leaves, anchored on the axis-aligned section through `p`. Symbolic
/// potentials are preferred and the numeric path integrator is the
/// fallback; the choice is recorded per slot.
pub fn build_chart(
    real: &Realization,
    a: &Subspace,
    p: &[f64],
    bx: &WorkBox,
    trace: &Trace,
    opts: &ChartOptions,
) -> Result<Chart, RectifyError> {
    let n = real.n;
    let chain = ideal_distribution_ranks(real, a, p, bx, opts.rank_samples, opts.seed)?;
    if chain.levels.last() != Some(a) {
        return Err(RectifyError::StructureMismatch {
            witness: format!(
                "series stabilizes at dimension {} instead of the given ideal",
                chain.levels.last().map(|s| s.dim()).unwrap_or(0)
            ),
        });
    }
    if chain.ranks[0] < n {
        return Err(RectifyError::FrameSingular { point: p.to_vec() });
    }
    let r = *chain.ranks.last().unwrap();

    // deficient case: a two-dimensional ideal spanning a line field
    let deficient = if a.dim() == 2 && r == 1 {
        let g0 = &a.rows()[0];
        let g1 = &a.rows()[1];
        let v0 = real.combination(g0, "a0").eval(p)?;
        let v1 = real.combination(g1, "a1").eval(p)?;
        let n0: f64 = v0.iter().map(|x| x * x).sum();
        let n1: f64 = v1.iter().map(|x| x * x).sum();
        let line = if n1 > n0 { g1.clone() } else { g0.clone() };
        Some(DeficientInfo { line })
    } else if a.dim() != r {
        return Err(RectifyError::StructureMismatch {
            witness: format!("ideal dimension {} with span rank {}", a.dim(), r),
        });
    } else {
        None
    };

    let preferred = deficient.as_ref().map(|d| d.line.clone());
    let frame = choose_frame(real, &chain, p, preferred)?;
    let coframe = Coframe::new(frame.clone(), trace.clone())?;

    let mut closedness_samples = vec![p.to_vec()];
    closedness_samples.extend(bx.samples(opts.seed.wrapping_add(1), opts.verify_samples));
    closedness_check(&coframe, &closedness_samples, 1e-6)?;

    let slots = build_potentials(real, &frame, &coframe, &chain, p, bx, trace, opts)?;

    let chart = Chart {
        n,
        r,
        base_point: p.to_vec(),
        bx: bx.clone(),
        frame,
        coframe,
        slots,
        a_rows: a.rows().clone(),
        deficient,
        trace: trace.clone(),
        warm: Mutex::new(None),
    };
    verify_chart(real, &chart, opts)?;
    Ok(chart)
}

#[allow(clippy::too_many_arguments)]
fn build_potentials(
    real: &Realization,
    frame: &Frame,
    coframe: &Coframe,
    chain: &RankChain,
    p: &[f64],
    bx: &WorkBox,
    trace: &Trace,
    opts: &ChartOptions,
) -> Result<Vec<SlotRecord>, RectifyError> {
    let n = real.n;
    let m = frame.deepest_level();
    let p_rat: Vec<BigRational> = p
        .iter()
        .map(|&x| BigRational::from_float(x).expect("finite base point"))
        .collect();

    let mut records: Vec<Option<SlotRecord>> = (0..n).map(|_| None).collect();
    // outer potentials in slot order, filled as levels complete
    for level in 0..=m {
        let slot_indices: Vec<usize> = frame
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.level == level)
            .map(|(i, _)| i)
            .collect();
        if slot_indices.is_empty() {
            continue;
        }
        // constraints: potentials of strictly outer levels
        let constraints: Vec<PotentialRef> = frame
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.level < level)
            .map(|(i, _)| records[i].as_ref().expect("outer level built").potential.clone())
            .collect();
        let leaf_rank = chain.ranks[level];

        // symbolic in-leaf structure: the leaf must be an axis-aligned
        // slice, i.e. the outer potentials depend on exactly n - rank
        // coordinates and are invertible over them at p
        let symbolic_leaf_legs: Option<Vec<usize>> = if level == 0 {
            Some((0..n).collect())
        } else {
            symbolic_leaf_structure(&constraints, n, leaf_rank, p)
        };

        for &slot_idx in &slot_indices {
            let symbolic = if opts.force_numeric || !coframe.is_symbolic() {
                None
            } else if let Some(legs) = &symbolic_leaf_legs {
                coframe
                    .symbolic_row(slot_idx)
                    .and_then(|row| integrate_row_symbolic(row, legs, &p_rat))
            } else {
                None
            };
            let record = match symbolic {
                Some(sp) => SlotRecord {
                    level,
                    strategy: PotentialStrategy::Symbolic,
                    potential: Arc::new(Potential::Symbolic(sp)),
                },
                None => {
                    let row = numeric_row(coframe, slot_idx);
                    let kind = if level == 0 {
                        NumericKind::Global
                    } else {
                        let (pinned, transverse) = section_split(frame, leaf_rank, p)?;
                        let tangents = frame
                            .slots
                            .iter()
                            .take(leaf_rank)
                            .map(|s| s.field.clone())
                            .collect();
                        NumericKind::InLeaf {
                            constraints: constraints.clone(),
                            pinned,
                            transverse,
                            tangents,
                        }
                    };
                    SlotRecord {
                        level,
                        strategy: PotentialStrategy::Numeric,
                        potential: Arc::new(Potential::Numeric(NumericPotential::new(
                            kind,
                            row,
                            p.to_vec(),
                            bx.clone(),
                            opts.tol,
                            trace.clone(),
                        ))),
                    }
                }
            };
            records[slot_idx] = Some(record);
        }
    }
    Ok(records.into_iter().map(|r| r.expect("all slots built")).collect())
}

/// When every outer potential is symbolic and collectively depends on
/// exactly `n - leaf_rank` coordinates over which they are invertible at
/// `p`, the leaves are the slices holding those coordinates fixed; the
/// remaining coordinates are the symbolic integration legs.
fn symbolic_leaf_structure(
    constraints: &[PotentialRef],
    n: usize,
    leaf_rank: usize,
    p: &[f64],
) -> Option<Vec<usize>> {
    let mut support: Vec<usize> = Vec::new();
    for c in constraints {
        let sp = c.symbolic()?;
        for v in sp.support() {
            if !support.contains(&v) {
                support.push(v);
            }
        }
    }
    support.sort_unstable();
    if support.len() != n - leaf_rank {
        return None;
    }
    // invertibility of the outer map over the support coordinates at p
    let k = support.len();
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for (ci, c) in constraints.iter().enumerate() {
        let g = c.grad(p).ok()?;
        for (ti, &tc) in support.iter().enumerate() {
            jac[(ci, ti)] = g[tc];
        }
    }
    if jac.lu().determinant().abs() < 1e-9 {
        return None;
    }
    Some((0..n).filter(|i| !support.contains(i)).collect())
}

/// Pinned coordinates for the axis-aligned section through `p` at a level
/// whose leaves have the given rank: pivot columns of the leaf tangent at
/// `p` are pinned, the rest are the Newton corrector's directions.
fn section_split(
    frame: &Frame,
    leaf_rank: usize,
    p: &[f64],
) -> Result<(Vec<usize>, Vec<usize>), RectifyError> {
    let n = frame.n();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(leaf_rank);
    for slot in frame.slots.iter().take(leaf_rank) {
        rows.push(slot.field.eval(p)?);
    }
    // column-pivoted elimination to find leaf-spanning coordinates
    let mut work = rows.clone();
    let mut pinned: Vec<usize> = Vec::new();
    let mut row_idx = 0;
    for col in 0..n {
        if row_idx >= work.len() {
            break;
        }
        let (best, mag) = (row_idx..work.len())
            .map(|i| (i, work[i][col].abs()))
            .fold((row_idx, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= 1e-9 {
            continue;
        }
        work.swap(row_idx, best);
        let piv = work[row_idx][col];
        for i in 0..work.len() {
            if i != row_idx {
                let f = work[i][col] / piv;
                for j in 0..n {
                    work[i][j] -= f * work[row_idx][j];
                }
            }
        }
        pinned.push(col);
        row_idx += 1;
    }
    if pinned.len() != leaf_rank {
        return Err(RectifyError::FrameSingular { point: p.to_vec() });
    }
    let transverse = (0..n).filter(|i| !pinned.contains(i)).collect();
    Ok((pinned, transverse))
}

fn numeric_row(coframe: &Coframe, slot: usize) -> RowEval {
    let cf = coframe.clone();
    RowEval::Numeric(Arc::new(move |q: &[f64]| cf.row(slot, q)))
}

/// Sample-based verification of the chart invariants: `Q(p) = 0`, the frame
/// fields of the ideal straighten to constant unit directions, the
/// remaining ideal generators push forward with base components zero, and
/// base rows of the Jacobian match the coframe rows.
fn verify_chart(real: &Realization, chart: &Chart, opts: &ChartOptions) -> Result<(), RectifyError> {
    let tol = 1e-8;
    let origin = chart.forward(&chart.base_point)?;
    if origin.iter().any(|x| x.abs() > 1e-9) {
        return Err(RectifyError::StructureMismatch {
            witness: format!("chart is not centered: Q(p) = {:?}", origin),
        });
    }
    let mut samples = vec![chart.base_point.clone()];
    samples.extend(
        chart
            .bx
            .samples(opts.seed.wrapping_add(2), opts.verify_samples)
            .into_iter()
            .map(|q| {
                // stay well inside the box so finite differences remain valid
                q.iter()
                    .zip(&chart.bx.center)
                    .map(|(x, c)| c + 0.8 * (x - c))
                    .collect::<Vec<f64>>()
            }),
    );
    for q in &samples {
        let jac = match chart.jacobian(q) {
            Ok(j) => j,
            Err(RectifyError::PathLeftDomain { .. }) => continue,
            Err(e) => return Err(e),
        };
        // fiber frame fields straighten to unit vectors
        for s in 0..chart.r {
            let v = chart.frame.slots[s].field.eval(q)?;
            for out_slot in 0..chart.n {
                let mut acc = 0.0;
                for i in 0..chart.n {
                    acc += jac[(out_slot, i)] * v[i];
                }
                let want = if out_slot == s { 1.0 } else { 0.0 };
                if (acc - want).abs() > tol {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!(
                            "fiber field {} pushes to {:.3e} in slot {} at {:?}",
                            s, acc, out_slot, q
                        ),
                    });
                }
            }
        }
        // every ideal generator is vertical: base components vanish
        for row in &chart.a_rows {
            let field = real.combination(row, "agen");
            let v = field.eval(q)?;
            for out_slot in chart.r..chart.n {
                let mut acc = 0.0;
                for i in 0..chart.n {
                    acc += jac[(out_slot, i)] * v[i];
                }
                if acc.abs() > tol {
                    return Err(RectifyError::StructureMismatch {
                        witness: format!(
                            "ideal generator leaks into base slot {} by {:.3e} at {:?}",
                            out_slot, acc, q
                        ),
                    });
                }
            }
        }
        // outermost-level rows of the Jacobian equal the coframe rows
        let cf = chart.coframe.matrix(q)?;
        for (s, slot) in chart.slots.iter().enumerate() {
            if slot.level == 0 {
                for i in 0..chart.n {
                    if (jac[(s, i)] - cf[(s, i)]).abs() > tol {
                        return Err(RectifyError::StructureMismatch {
                            witness: format!(
                                "base slot {} gradient differs from the coframe at {:?}",
                                s, q
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Convenience wrapper: potential for a single closed 1-form row, exposed
/// for direct use and tests.
pub fn potential_for_row(
    row: Vec<crate::expr::ScalarExpr>,
    strategy: PotentialStrategy,
    anchor: &[f64],
    bx: &WorkBox,
    tol: f64,
    trace: &Trace,
) -> Result<Potential, RectifyError> {
    match strategy {
        PotentialStrategy::Symbolic => {
            let anchor_rat: Vec<BigRational> = anchor
                .iter()
                .map(|&x| BigRational::from_float(x).expect("finite anchor"))
                .collect();
            let legs: Vec<usize> = (0..row.len()).collect();
            integrate_row_symbolic(&row, &legs, &anchor_rat)
                .map(Potential::Symbolic)
                .ok_or(RectifyError::NoSymbolicForm)
        }
        PotentialStrategy::Numeric => {
            let compiled = Arc::new(row.iter().map(|e| e.compile()).collect::<Vec<_>>());
            Ok(Potential::Numeric(NumericPotential::new(
                NumericKind::Global,
                RowEval::Compiled(compiled),
                anchor.to_vec(),
                bx.clone(),
                tol,
                trace.clone(),
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::lie::Subspace;
    use crate::linalg::rat_i64;
    use crate::rectify::tests::{e2_realization, six_field_realization};

    fn unit(d: usize, i: usize) -> RatVec {
        let mut v = vec![BigRational::from_integer(0.into()); d];
        v[i] = rat_i64(1);
        v
    }

    fn bx2() -> WorkBox {
        WorkBox::new(vec![0.0, 0.0], 2.0)
    }

    #[test]
    fn plane_chart_at_origin_is_x_and_arctan() {
        let (real, c) = e2_realization();
        let a = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        let trace = Trace::new();
        let chart = build_chart(
            &real,
            &a,
            &[0.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions::default(),
        )
        .unwrap();
        assert_eq!(chart.r, 1);
        assert!(chart.deficient.is_some());
        // fiber potential is x, base potential is arctan y
        let q = [0.8, 1.3];
        let qv = chart.forward(&q).unwrap();
        assert!((qv[0] - 0.8).abs() < 1e-10);
        assert!((qv[1] - 1.3f64.atan()).abs() < 1e-10);
        // both slots came out symbolic
        assert!(chart
            .slots
            .iter()
            .all(|s| s.strategy == PotentialStrategy::Symbolic));
        // the deficient line is the first generator (d/dx)
        assert_eq!(chart.deficient.as_ref().unwrap().line, unit(3, 0));
        let _ = c;
    }

    #[test]
    fn chart_round_trip_and_straightening() {
        let (real, _) = e2_realization();
        let a = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        let trace = Trace::new();
        let chart = build_chart(
            &real,
            &a,
            &[1.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions::default(),
        )
        .unwrap();
        let bx = WorkBox::new(vec![1.0, 0.0], 0.9);
        for q in bx.samples(5, 100) {
            let qv = chart.forward(&q).unwrap();
            let back = chart.inverse(&qv).unwrap();
            for (x, y) in q.iter().zip(&back) {
                assert!((x - y).abs() < 1e-9, "round trip {:?} -> {:?}", q, back);
            }
        }
        // straightening: pushforward of d/dx is e_1 everywhere sampled
        for q in bx.samples(6, 100) {
            let push = chart.push_vector(&q, &[1.0, 0.0]).unwrap();
            assert!((push[0] - 1.0).abs() < 1e-8);
            assert!(push[1].abs() < 1e-8);
            // y d/dx is vertical with multiplier y
            let push2 = chart.push_vector(&q, &[q[1], 0.0]).unwrap();
            assert!((push2[0] - q[1]).abs() < 1e-8);
            assert!(push2[1].abs() < 1e-8);
        }
    }

    #[test]
    fn six_field_chart_with_line_ideal() {
        let (real, _) = six_field_realization();
        let a = Subspace::span_of(6, &unit(6, 0));
        let trace = Trace::new();
        let chart = build_chart(
            &real,
            &a,
            &[0.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions::default(),
        )
        .unwrap();
        // already straight: Q = (x, y)
        assert_eq!(chart.r, 1);
        assert!(chart.deficient.is_none());
        let q = [0.4, -0.7];
        let qv = chart.forward(&q).unwrap();
        assert!((qv[0] - 0.4).abs() < 1e-10 && (qv[1] + 0.7).abs() < 1e-10);
    }

    #[test]
    fn six_field_chart_with_plane_ideal() {
        let (real, _) = six_field_realization();
        // A3 = <d/dx, y d/dx>: ideal of dimension 2 with rank 1 (deficient)
        let a = Subspace::from_rows(6, vec![unit(6, 0), unit(6, 5)]);
        let trace = Trace::new();
        let chart = build_chart(
            &real,
            &a,
            &[0.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions::default(),
        )
        .unwrap();
        assert!(chart.deficient.is_some());
        assert_eq!(chart.r, 1);
        // the line picked at the origin is d/dx (y d/dx vanishes there)
        assert_eq!(chart.deficient.as_ref().unwrap().line, unit(6, 0));
    }

    #[test]
    fn numeric_chart_matches_symbolic() {
        let (real, _) = e2_realization();
        let a = Subspace::from_rows(3, vec![unit(3, 0), unit(3, 1)]);
        let trace = Trace::new();
        let sym = build_chart(
            &real,
            &a,
            &[1.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions::default(),
        )
        .unwrap();
        let num = build_chart(
            &real,
            &a,
            &[1.0, 0.0],
            &bx2(),
            &trace,
            &ChartOptions {
                force_numeric: true,
                ..ChartOptions::default()
            },
        )
        .unwrap();
        assert!(num
            .slots
            .iter()
            .all(|s| s.strategy == PotentialStrategy::Numeric));
        let bx = WorkBox::new(vec![1.0, 0.0], 0.8);
        for q in bx.samples(9, 12) {
            let a = sym.forward(&q).unwrap();
            let b = num.forward(&q).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-7, "symbolic {:?} numeric {:?}", a, b);
            }
        }
        let s = trace.snapshot();
        assert!(s.quad1d_calls > 0);
        assert!(s.leaf_corrector_steps > 0 || s.newton_calls > 0);
    }

    #[test]
    fn potential_op_examples() {
        // alpha = dy/(1+y^2) anchored at y = 0 gives arctan y under both
        // strategies, and they agree at sample points
        let c = crate::expr::CoordinateSystem::new(vec!["x", "y"]).unwrap();
        let row = vec![parse("0", &c).unwrap(), parse("1/(1+y^2)", &c).unwrap()];
        let trace = Trace::new();
        let sym = potential_for_row(
            row.clone(),
            PotentialStrategy::Symbolic,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        let num = potential_for_row(
            row,
            PotentialStrategy::Numeric,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        let q = [0.3, 1.0];
        let vs = sym.eval(&q).unwrap();
        let vn = num.eval(&q).unwrap();
        assert!((vs - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
        assert!((vs - vn).abs() < 1e-9);

        // alpha = dy: identical under both strategies and any path
        let row = vec![parse("0", &c).unwrap(), parse("1", &c).unwrap()];
        let sym = potential_for_row(
            row.clone(),
            PotentialStrategy::Symbolic,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        let num = potential_for_row(
            row,
            PotentialStrategy::Numeric,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        for q in bx2().samples(31, 10) {
            assert!((sym.eval(&q).unwrap() - q[1]).abs() < 1e-12);
            assert!((num.eval(&q).unwrap() - q[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn numeric_potentials_are_path_order_independent() {
        // exact form with potential x^2 y + arctan y: integrate along the
        // two axis orders by building the potential on swapped coordinates
        let c = crate::expr::CoordinateSystem::new(vec!["x", "y"]).unwrap();
        let row = vec![
            parse("2*x*y", &c).unwrap(),
            parse("x^2 + 1/(1+y^2)", &c).unwrap(),
        ];
        let cswap = crate::expr::CoordinateSystem::new(vec!["y", "x"]).unwrap();
        let row_swapped = vec![
            parse("x^2 + 1/(1+y^2)", &cswap).unwrap(),
            parse("2*x*y", &cswap).unwrap(),
        ];
        let trace = Trace::new();
        let p1 = potential_for_row(
            row,
            PotentialStrategy::Numeric,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        let p2 = potential_for_row(
            row_swapped,
            PotentialStrategy::Numeric,
            &[0.0, 0.0],
            &bx2(),
            1e-11,
            &trace,
        )
        .unwrap();
        for q in bx2().samples(17, 20) {
            let a = p1.eval(&q).unwrap();
            let b = p2.eval(&[q[1], q[0]]).unwrap();
            assert!((a - b).abs() < 1e-8, "paths disagree: {} vs {}", a, b);
        }
    }
}
