//! The quadrature integrator: adaptive 1-D quadrature, the closed-form
//! solvers for scalar linear and constant-coefficient linear systems, matrix
//! exponentials, solution of autonomous 1-D equations by quadrature plus
//! function inversion, and the recursive reduction that ties them together.
//!
//! Every primitive operation increments a [`Trace`]; a quadrature-mode run
//! must finish with `ode_steps == 0`, which [`audit`] enforces.

pub mod anchors;
pub mod flow;
pub mod linear;
pub mod quad;

pub use flow::{integrate_quadratures, integrate_quadratures_traced, uniform_grid, FlowOptions};
pub use linear::{matexp, solve_linear_const, solve_scalar_linear_td};
pub use quad::{quad1d, solve_autonomous_1d, AutonomousFlow};

use crate::lie::LieError;
use crate::rectify::RectifyError;
use serde::Serialize;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Primitive-operation counters for one integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TraceSnapshot {
    pub quad1d_calls: u64,
    pub newton_calls: u64,
    pub matexp_calls: u64,
    pub linear_solves: u64,
    pub leaf_corrector_steps: u64,
    pub ode_steps: u64,
}

#[derive(Debug, Default)]
struct TraceInner {
    quad1d_calls: AtomicU64,
    newton_calls: AtomicU64,
    matexp_calls: AtomicU64,
    linear_solves: AtomicU64,
    leaf_corrector_steps: AtomicU64,
    ode_steps: AtomicU64,
}

/// Shared handle to the counters; clones count into the same run.
#[derive(Debug, Clone, Default)]
pub struct Trace(Arc<TraceInner>);

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn count_quad1d(&self) {
        self.0.quad1d_calls.fetch_add(1, Ordering::Relaxed);
    }
    pub fn count_newton(&self) {
        self.0.newton_calls.fetch_add(1, Ordering::Relaxed);
    }
    pub fn count_matexp(&self) {
        self.0.matexp_calls.fetch_add(1, Ordering::Relaxed);
    }
    pub fn count_linear_solve(&self) {
        self.0.linear_solves.fetch_add(1, Ordering::Relaxed);
    }
    pub fn count_leaf_corrector(&self, steps: u64) {
        self.0
            .leaf_corrector_steps
            .fetch_add(steps, Ordering::Relaxed);
    }
    pub fn count_ode_step(&self) {
        self.0.ode_steps.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TraceSnapshot {
        TraceSnapshot {
            quad1d_calls: self.0.quad1d_calls.load(Ordering::Relaxed),
            newton_calls: self.0.newton_calls.load(Ordering::Relaxed),
            matexp_calls: self.0.matexp_calls.load(Ordering::Relaxed),
            linear_solves: self.0.linear_solves.load(Ordering::Relaxed),
            leaf_corrector_steps: self.0.leaf_corrector_steps.load(Ordering::Relaxed),
            ode_steps: self.0.ode_steps.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrajectoryMode {
    Quadrature,
    Reference,
}

impl fmt::Display for TrajectoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryMode::Quadrature => write!(f, "quadrature"),
            TrajectoryMode::Reference => write!(f, "reference"),
        }
    }
}

/// A computed flow sampled on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub trace: TraceSnapshot,
    pub mode: TrajectoryMode,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        trace: TraceSnapshot,
        mode: TrajectoryMode,
    ) -> Trajectory {
        assert_eq!(times.len(), states.len());
        assert!(
            times.windows(2).all(|w| w[0] < w[1]),
            "times must be strictly increasing"
        );
        assert!(
            states
                .iter()
                .all(|s| s.iter().all(|x| x.is_finite())),
            "states must be finite"
        );
        Trajectory {
            times,
            states,
            trace,
            mode,
        }
    }
}

#[derive(Debug, Clone)]
pub enum IntegrateError {
    /// Adaptive refinement hit its depth limit before the error estimate
    /// dropped below the requested tolerance.
    ToleranceNotMet { achieved: f64, requested: f64 },
    NonFiniteIntegrand { at: f64 },
    /// The requested time lies beyond the maximal interval of existence;
    /// carries the best bracketing of the boundary time.
    LeftMaximalInterval { t_low: f64, t_high: f64 },
    InversionFailed { target_time: f64 },
    NotSolvable,
    NotTransitive { witness: Vec<f64> },
    Lie(LieError),
    /// Chart or split failure, tagged with the recursion level it occurred at.
    Rectify { level: usize, source: RectifyError },
    /// A gamma that is not a basis field of the case.
    UnknownGamma { name: String },
    BadInput(String),
}

impl fmt::Display for IntegrateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrateError::ToleranceNotMet {
                achieved,
                requested,
            } => write!(
                f,
                "quadrature tolerance not met: achieved {:.3e}, requested {:.3e}",
                achieved, requested
            ),
            IntegrateError::NonFiniteIntegrand { at } => {
                write!(f, "integrand not finite at {}", at)
            }
            IntegrateError::LeftMaximalInterval { t_low, t_high } => write!(
                f,
                "time outside the maximal interval; boundary bracketed in [{}, {}]",
                t_low, t_high
            ),
            IntegrateError::InversionFailed { target_time } => {
                write!(f, "monotone inversion failed at t = {}", target_time)
            }
            IntegrateError::NotSolvable => write!(f, "algebra is not solvable"),
            IntegrateError::NotTransitive { witness } => {
                write!(f, "algebra is not transitive; witness point {:?}", witness)
            }
            IntegrateError::Lie(e) => write!(f, "structure analysis failed: {}", e),
            IntegrateError::Rectify { level, source } => {
                write!(f, "rectification failed at recursion level {}: {}", level, source)
            }
            IntegrateError::UnknownGamma { name } => {
                write!(f, "gamma `{}` is not a basis field", name)
            }
            IntegrateError::BadInput(msg) => write!(f, "bad input: {}", msg),
        }
    }
}

impl std::error::Error for IntegrateError {}

impl From<LieError> for IntegrateError {
    fn from(e: LieError) -> Self {
        match e {
            LieError::NotSolvable => IntegrateError::NotSolvable,
            other => IntegrateError::Lie(other),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub mode: TrajectoryMode,
    pub trace: TraceSnapshot,
    pub pass: bool,
    pub message: String,
}

/// Verify that a quadrature-mode trace did no ODE stepping. Reference-mode
/// traces are labelled but never failed.
pub fn audit(trace: &TraceSnapshot, mode: TrajectoryMode) -> AuditReport {
    let pass = match mode {
        TrajectoryMode::Quadrature => trace.ode_steps == 0,
        TrajectoryMode::Reference => true,
    };
    let message = match (mode, pass) {
        (TrajectoryMode::Quadrature, true) => "quadrature run used no ODE steps".to_string(),
        (TrajectoryMode::Quadrature, false) => format!(
            "AUDIT FAILURE: quadrature run recorded {} ODE steps",
            trace.ode_steps
        ),
        (TrajectoryMode::Reference, _) => format!(
            "reference run recorded {} ODE steps (allowed)",
            trace.ode_steps
        ),
    };
    AuditReport {
        mode,
        trace: *trace,
        pass,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_gates_on_ode_steps() {
        let mut t = TraceSnapshot::default();
        assert!(audit(&t, TrajectoryMode::Quadrature).pass);
        t.ode_steps = 5;
        assert!(!audit(&t, TrajectoryMode::Quadrature).pass);
        assert!(audit(&t, TrajectoryMode::Reference).pass);
    }

    #[test]
    fn trace_handles_share_counters() {
        let t = Trace::new();
        let t2 = t.clone();
        t.count_quad1d();
        t2.count_quad1d();
        t2.count_ode_step();
        let s = t.snapshot();
        assert_eq!(s.quad1d_calls, 2);
        assert_eq!(s.ode_steps, 1);
    }
}
