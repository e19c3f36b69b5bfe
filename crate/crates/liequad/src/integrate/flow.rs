//! The recursive reduction: straighten a small Abelian ideal, integrate the
//! reduced base system by the same procedure, then close the fiber with the
//! constant-coefficient or scalar linear solver. The recursion bottoms out
//! in an autonomous scalar equation solved by one quadrature plus inversion.

use super::linear::{LinearConstFlow, ScalarLinearFlow};
use super::quad::AutonomousFlow;
use super::{IntegrateError, Trace, Trajectory, TrajectoryMode};
use crate::lie::{abelian_ideal_le2, is_solvable, structure_constants, LieAlgebraPresentation};
use crate::linalg::RatVec;
use crate::rectify::{
    build_chart, split_gamma, Chart, ChartOptions, Realization, RectifyError, SplitCase,
    WorkBox,
};
use crate::vfield::transitivity_check;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Per-quadrature tolerance.
    pub tol: f64,
    /// Half-width of the working box around the initial point.
    pub box_half_width: f64,
    /// Sample count for the transitivity probe at the top level.
    pub transitivity_samples: usize,
    pub seed: u64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-10,
            box_half_width: 2.0,
            transitivity_samples: 200,
            seed: 20_240_501,
        }
    }
}

/// Dense-output evaluator of one flow level.
trait Flow {
    fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError>;
}

struct Scalar1Flow {
    inner: AutonomousFlow,
}

impl Flow for Scalar1Flow {
    fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        Ok(vec![self.inner.eval(t)?])
    }
}

/// Zero-dimensional base: nothing to integrate.
struct EmptyFlow;

impl Flow for EmptyFlow {
    fn eval(&self, _t: f64) -> Result<Vec<f64>, IntegrateError> {
        Ok(Vec::new())
    }
}

enum FiberFlow {
    Linear(LinearConstFlow),
    Scalar(ScalarLinearFlow),
}

/// One reduction step: fiber solved in closed form over the recursive base
/// flow, mapped back through the chart inverse.
struct ReducedFlow {
    chart: Arc<Chart>,
    base: Box<dyn Flow>,
    fiber: FiberFlow,
    level: usize,
}

impl Flow for ReducedFlow {
    fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let b = self.base.eval(t)?;
        let v = match &self.fiber {
            FiberFlow::Linear(f) => f.eval(t)?,
            FiberFlow::Scalar(f) => vec![f.eval(t)?],
        };
        let mut q = v;
        q.extend(b);
        self.chart
            .inverse(&q)
            .map_err(|e| lift_rectify(e, self.level))
    }
}

fn lift_rectify(e: RectifyError, level: usize) -> IntegrateError {
    match e {
        RectifyError::Quadrature(inner) => *inner,
        other => IntegrateError::Rectify {
            level,
            source: other,
        },
    }
}

struct FlowProblem {
    real: Realization,
    gamma: RatVec,
    x0: Vec<f64>,
    bx: WorkBox,
    tol: f64,
    trace: Trace,
    seed: u64,
}

fn build_flow(prob: FlowProblem, level: usize) -> Result<Box<dyn Flow>, IntegrateError> {
    let n = prob.real.n;
    if n == 0 {
        return Ok(Box::new(EmptyFlow));
    }
    if n == 1 {
        // base case: autonomous scalar equation, one quadrature + inversion
        let field = prob.real.combination(&prob.gamma, "gamma");
        let f = move |x: f64| -> Result<f64, IntegrateError> {
            field
                .eval(&[x])
                .map(|v| v[0])
                .map_err(|e| lift_rectify(e, level))
        };
        let inner = AutonomousFlow::new(Box::new(f), prob.x0[0], prob.tol, prob.trace.clone())?;
        return Ok(Box::new(Scalar1Flow { inner }));
    }

    let solv = is_solvable(&prob.real.constants);
    if !solv.solvable {
        return Err(IntegrateError::NotSolvable);
    }
    let ideal = abelian_ideal_le2(&prob.real.constants)?;
    let chart_opts = ChartOptions {
        tol: prob.tol,
        seed: prob.seed,
        ..ChartOptions::default()
    };
    let chart = Arc::new(
        build_chart(
            &prob.real,
            &ideal.subspace,
            &prob.x0,
            &prob.bx,
            &prob.trace,
            &chart_opts,
        )
        .map_err(|e| lift_rectify(e, level))?,
    );
    let split = split_gamma(&prob.real, &ideal.subspace, &prob.gamma, &chart)
        .map_err(|e| lift_rectify(e, level))?;
    let r = split.r;

    // recursive base problem in the chart's base coordinates; the chart is
    // centered at x0, so the base starts at the origin
    let base_dim = n - r;
    let base: Box<dyn Flow> = if base_dim == 0 {
        Box::new(EmptyFlow)
    } else {
        let base_real = Realization {
            n: base_dim,
            fields: split.base_fields.clone(),
            constants: split.base_constants.clone(),
        };
        let base_prob = FlowProblem {
            real: base_real,
            gamma: split.gamma_base_coeffs.clone(),
            x0: vec![0.0; base_dim],
            bx: WorkBox::new(vec![0.0; base_dim], prob.bx.half_width),
            tol: prob.tol,
            trace: prob.trace.clone(),
            seed: prob.seed.wrapping_add(101),
        };
        build_flow(base_prob, level + 1)?
    };
    let base = Arc::new(base);

    let fiber = match split.case {
        SplitCase::FullRank => {
            let w = split.w.clone();
            let base_for_w = base.clone();
            let forcing = move |t: f64| -> Result<Vec<f64>, IntegrateError> {
                let b = base_for_w.eval(t)?;
                w(&b).map_err(|e| lift_rectify(e, level))
            };
            FiberFlow::Linear(LinearConstFlow::new(
                split.h.clone(),
                Box::new(forcing),
                vec![0.0; r],
                prob.tol,
                prob.trace.clone(),
            ))
        }
        SplitCase::Deficient => {
            let f = split.f.clone().expect("deficient split provides f");
            let w = split.w.clone();
            let base_for_f = base.clone();
            let base_for_w = base.clone();
            let c1 = move |t: f64| -> Result<f64, IntegrateError> {
                let b = base_for_f.eval(t)?;
                f(&b).map_err(|e| lift_rectify(e, level))
            };
            let c0 = move |t: f64| -> Result<f64, IntegrateError> {
                let b = base_for_w.eval(t)?;
                w(&b).map(|v| v[0]).map_err(|e| lift_rectify(e, level))
            };
            FiberFlow::Scalar(ScalarLinearFlow::new(
                Box::new(c1),
                Box::new(c0),
                0.0,
                prob.tol,
                prob.trace.clone(),
            ))
        }
    };

    struct ArcFlow(Arc<Box<dyn Flow>>);
    impl Flow for ArcFlow {
        fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
            self.0.eval(t)
        }
    }

    Ok(Box::new(ReducedFlow {
        chart,
        base: Box::new(ArcFlow(base)),
        fiber,
        level,
    }))
}

/// Integrate the flow of the named basis field through the recursive
/// quadrature pipeline, sampling the result on `tgrid` (whose first entry
/// is the initial time for `x0`).
pub fn integrate_quadratures(
    l: &LieAlgebraPresentation,
    gamma_name: &str,
    x0: &[f64],
    tgrid: &[f64],
    opts: &FlowOptions,
) -> Result<Trajectory, IntegrateError> {
    let trace = Trace::new();
    integrate_quadratures_traced(l, gamma_name, x0, tgrid, opts, &trace)
}

pub fn integrate_quadratures_traced(
    l: &LieAlgebraPresentation,
    gamma_name: &str,
    x0: &[f64],
    tgrid: &[f64],
    opts: &FlowOptions,
    trace: &Trace,
) -> Result<Trajectory, IntegrateError> {
    if tgrid.is_empty() {
        return Err(IntegrateError::BadInput("empty time grid".into()));
    }
    if !tgrid.windows(2).all(|w| w[0] < w[1]) {
        return Err(IntegrateError::BadInput(
            "time grid must be strictly increasing".into(),
        ));
    }
    let n = l.coords.dim();
    if x0.len() != n {
        return Err(IntegrateError::BadInput(format!(
            "initial state has dimension {}, manifold has {}",
            x0.len(),
            n
        )));
    }
    let gamma_idx = l
        .basis
        .iter()
        .position(|f| f.name == gamma_name)
        .ok_or_else(|| IntegrateError::UnknownGamma {
            name: gamma_name.to_string(),
        })?;

    let constants = structure_constants(l)?;
    let solv = is_solvable(&constants);
    if !solv.solvable {
        return Err(IntegrateError::NotSolvable);
    }

    let bx = WorkBox::new(x0.to_vec(), opts.box_half_width);
    let samples = bx.samples(opts.seed, opts.transitivity_samples.max(1));
    let report = transitivity_check(&l.basis, &samples)
        .map_err(|e| IntegrateError::Lie(crate::lie::LieError::Field(e)))?;
    if !report.transitive {
        return Err(IntegrateError::NotTransitive {
            witness: report.witnesses[0].0.clone(),
        });
    }

    let mut gamma = vec![BigRational::zero(); l.dim()];
    gamma[gamma_idx] = BigRational::one();
    let real = Realization::from_presentation(l, constants);

    // The working box is local by default; when the trajectory walks out of
    // it the run is retried with a wider box. Exhausting the retries means
    // the flow escapes every box in finite time: that is reported as a
    // maximal-interval boundary, bracketed by bisection.
    let mut last_err = None;
    for widen in 0..3 {
        let prob = FlowProblem {
            real: real.clone(),
            gamma: gamma.clone(),
            x0: x0.to_vec(),
            bx: WorkBox::new(x0.to_vec(), opts.box_half_width * f64::powi(2.0, widen)),
            tol: opts.tol,
            trace: trace.clone(),
            seed: opts.seed,
        };
        match sample_flow(prob, tgrid, trace, widen == 2) {
            Ok(traj) => return Ok(traj),
            Err(e) if domain_limited(&e) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("retry loop records an error"))
}

/// Domain failures that a wider working box may fix.
fn domain_limited(e: &IntegrateError) -> bool {
    matches!(
        e,
        IntegrateError::Rectify {
            source: RectifyError::PathLeftDomain { .. } | RectifyError::InversionFailed { .. },
            ..
        }
    )
}

fn sample_flow(
    prob: FlowProblem,
    tgrid: &[f64],
    trace: &Trace,
    finalize_domain: bool,
) -> Result<Trajectory, IntegrateError> {
    let flow = build_flow(prob, 0)?;
    let t0 = tgrid[0];
    let mut states = Vec::with_capacity(tgrid.len());
    for (k, &t) in tgrid.iter().enumerate() {
        match flow.eval(t - t0) {
            Ok(s) => {
                if s.iter().any(|x| !x.is_finite()) {
                    return Err(IntegrateError::BadInput(format!(
                        "non-finite state at t = {}",
                        t
                    )));
                }
                states.push(s);
            }
            Err(e) => {
                if finalize_domain && domain_limited(&e) && k > 0 {
                    // bracket the escape time by bisection
                    let mut lo = tgrid[k - 1] - t0;
                    let mut hi = t - t0;
                    for _ in 0..8 {
                        let mid = 0.5 * (lo + hi);
                        match flow.eval(mid) {
                            Ok(_) => lo = mid,
                            Err(_) => hi = mid,
                        }
                    }
                    return Err(IntegrateError::LeftMaximalInterval {
                        t_low: t0 + lo,
                        t_high: t0 + hi,
                    });
                }
                return Err(e);
            }
        }
    }
    Ok(Trajectory::new(
        tgrid.to_vec(),
        states,
        trace.snapshot(),
        TrajectoryMode::Quadrature,
    ))
}

/// Uniform grid helper shared by the CLI and the harness.
pub fn uniform_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    assert!(t1 > t0 && steps >= 1);
    (0..=steps)
        .map(|k| t0 + (t1 - t0) * (k as f64) / (steps as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CoordinateSystem;
    use crate::integrate::audit;
    use crate::vfield::VectorField;

    fn e2_presentation() -> LieAlgebraPresentation {
        let c = CoordinateSystem::new(vec!["x", "y"]).unwrap();
        let x1 = VectorField::parse("X1", &["1", "0"], &c).unwrap();
        let x2 = VectorField::parse("X2", &["y", "0"], &c).unwrap();
        let j = VectorField::parse("J", &["x*y", "1 + y^2"], &c).unwrap();
        LieAlgebraPresentation::new(vec![x1, x2, j]).unwrap()
    }

    #[test]
    fn plane_flow_matches_secant_tangent() {
        // closed form from (1, 0): x(t) = 1/cos t, y(t) = tan t
        let l = e2_presentation();
        let grid = uniform_grid(0.0, 1.2, 24);
        let traj =
            integrate_quadratures(&l, "J", &[1.0, 0.0], &grid, &FlowOptions::default()).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let want_x = 1.0 / t.cos();
            let want_y = t.tan();
            assert!(
                (s[0] - want_x).abs() < 1e-6,
                "x({}) = {} want {}",
                t,
                s[0],
                want_x
            );
            assert!(
                (s[1] - want_y).abs() < 1e-6,
                "y({}) = {} want {}",
                t,
                s[1],
                want_y
            );
        }
        let report = audit(&traj.trace, traj.mode);
        assert!(report.pass, "{}", report.message);
        assert!(traj.trace.quad1d_calls > 0);
    }

    #[test]
    fn plane_flow_generic_start() {
        // derived closed form: y = tan(t + atan y0), x = x0 cos(atan y0)/cos(...)
        let l = e2_presentation();
        let (x0, y0) = (1.0, 0.5);
        let grid = uniform_grid(0.0, 0.9, 18);
        let traj =
            integrate_quadratures(&l, "J", &[x0, y0], &grid, &FlowOptions::default()).unwrap();
        let phase = y0.atan();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let want_y = (t + phase).tan();
            let want_x = x0 * phase.cos() / (t + phase).cos();
            assert!((s[1] - want_y).abs() < 1e-6, "y({}) = {} want {}", t, s[1], want_y);
            assert!((s[0] - want_x).abs() < 1e-6, "x({}) = {} want {}", t, s[0], want_x);
        }
    }

    #[test]
    fn non_solvable_is_rejected() {
        let c = CoordinateSystem::new(vec!["x"]).unwrap();
        let l = LieAlgebraPresentation::new(vec![
            VectorField::parse("E1", &["1"], &c).unwrap(),
            VectorField::parse("E2", &["x"], &c).unwrap(),
            VectorField::parse("E3", &["x^2"], &c).unwrap(),
        ])
        .unwrap();
        let grid = uniform_grid(0.0, 1.0, 4);
        match integrate_quadratures(&l, "E1", &[0.0], &grid, &FlowOptions::default()) {
            Err(IntegrateError::NotSolvable) => {}
            other => panic!("expected NotSolvable, got {:?}", other),
        }
    }

    #[test]
    fn non_transitive_is_rejected() {
        let c = CoordinateSystem::new(vec!["x", "y"]).unwrap();
        // both fields point along x only
        let l = LieAlgebraPresentation::new(vec![
            VectorField::parse("A", &["1", "0"], &c).unwrap(),
            VectorField::parse("B", &["x", "0"], &c).unwrap(),
        ])
        .unwrap();
        let grid = uniform_grid(0.0, 1.0, 4);
        match integrate_quadratures(&l, "A", &[0.0, 0.0], &grid, &FlowOptions::default()) {
            Err(IntegrateError::NotTransitive { .. }) => {}
            other => panic!("expected NotTransitive, got {:?}", other),
        }
    }

    #[test]
    fn heisenberg_flow_three_levels() {
        // X = d/dx, Y = d/dy + x d/dz, Z = d/dz; flow of Y from (x0, y0, z0)
        // is (x0, y0 + t, z0 + x0 t)
        let c = CoordinateSystem::new(vec!["x", "y", "z"]).unwrap();
        let l = LieAlgebraPresentation::new(vec![
            VectorField::parse("X", &["1", "0", "0"], &c).unwrap(),
            VectorField::parse("Y", &["0", "1", "x"], &c).unwrap(),
            VectorField::parse("Z", &["0", "0", "1"], &c).unwrap(),
        ])
        .unwrap();
        let grid = uniform_grid(0.0, 1.0, 10);
        let x0 = [0.7, -0.2, 0.3];
        let traj = integrate_quadratures(&l, "Y", &x0, &grid, &FlowOptions::default()).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[0] - 0.7).abs() < 1e-7);
            assert!((s[1] - (-0.2 + t)).abs() < 1e-7);
            assert!((s[2] - (0.3 + 0.7 * t)).abs() < 1e-7, "z({}) = {}", t, s[2]);
        }
        assert_eq!(traj.trace.ode_steps, 0);
    }

    #[test]
    fn base_case_is_the_autonomous_solver() {
        // a one-dimensional problem goes straight to the scalar path
        let c = CoordinateSystem::new(vec!["x"]).unwrap();
        let l = LieAlgebraPresentation::new(vec![
            VectorField::parse("F", &["1 + x^2"], &c).unwrap(),
        ])
        .unwrap();
        let grid = uniform_grid(0.0, 0.5, 5);
        let traj = integrate_quadratures(&l, "F", &[0.0], &grid, &FlowOptions::default()).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[0] - t.tan()).abs() < 1e-9);
        }
        assert!((traj.states.last().unwrap()[0] - 0.5463024898f64).abs() < 1e-8);
    }

    #[test]
    fn flow_property_restart() {
        let l = e2_presentation();
        let opts = FlowOptions::default();
        let grid = uniform_grid(0.0, 0.8, 8);
        let traj = integrate_quadratures(&l, "J", &[1.0, 0.0], &grid, &opts).unwrap();
        let mid = traj.states[4].clone(); // t = 0.4
        let grid2 = uniform_grid(0.0, 0.4, 4);
        let traj2 = integrate_quadratures(&l, "J", &mid, &grid2, &opts).unwrap();
        let end_direct = &traj.states[8]; // t = 0.8
        let end_restart = traj2.states.last().unwrap();
        for (a, b) in end_direct.iter().zip(end_restart) {
            assert!((a - b).abs() < 2e-6, "flow property: {} vs {}", a, b);
        }
    }

    #[test]
    fn trajectory_derivative_matches_field() {
        let l = e2_presentation();
        let grid = uniform_grid(0.0, 0.6, 600);
        let traj =
            integrate_quadratures(&l, "J", &[1.0, 0.2], &grid, &FlowOptions::default()).unwrap();
        let j = &l.basis[2];
        let dt = grid[1] - grid[0];
        for k in (10..traj.states.len() - 10).step_by(37) {
            let fd: Vec<f64> = (0..2)
                .map(|i| (traj.states[k + 1][i] - traj.states[k - 1][i]) / (2.0 * dt))
                .collect();
            let fv = crate::vfield::eval_field(j, &traj.states[k]).unwrap();
            for (a, b) in fd.iter().zip(&fv) {
                assert!(
                    (a - b).abs() <= 1e-4 * (1.0 + b.abs()),
                    "derivative mismatch at k={}: {} vs {}",
                    k,
                    a,
                    b
                );
            }
        }
    }

    #[test]
    fn blow_up_inside_grid_is_an_error() {
        let l = e2_presentation();
        let grid = uniform_grid(0.0, 2.0, 10); // tan blows up at pi/2
        match integrate_quadratures(&l, "J", &[1.0, 0.0], &grid, &FlowOptions::default()) {
            Err(IntegrateError::LeftMaximalInterval { .. }) => {}
            other => panic!("expected LeftMaximalInterval, got {:?}", other),
        }
    }
}
