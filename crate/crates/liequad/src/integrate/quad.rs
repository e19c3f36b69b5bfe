//! Adaptive 1-D quadrature (7-15 Gauss–Kronrod pair with bisection) and the
//! quadrature-plus-inversion solver for autonomous scalar equations.

use super::anchors::AnchorMap;
use super::{IntegrateError, Trace};
use std::cell::RefCell;

// 7-15 Gauss-Kronrod pair: Kronrod abscissae and weights on [-1, 1]
// (positive half; the node 0 is last), Gauss weights for the embedded rule.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod_panel<F>(f: &mut F, a: f64, b: f64) -> Result<Panel, IntegrateError>
where
    F: FnMut(f64) -> Result<f64, IntegrateError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| -> Result<f64, IntegrateError> {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(IntegrateError::NonFiniteIntegrand { at: x });
        }
        Ok(v)
    };
    let fc = eval(center)?;
    let mut kron = fc * WGK[7];
    let mut gauss = 0.0;
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        kron += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    // the center node belongs to the Gauss rule as well
    gauss += WG[3] * fc;
    let value = kron * half;
    let raw = ((kron - gauss) * half).abs();
    // standard rescaling: the raw difference underestimates smooth cases
    let error = if raw == 0.0 { 0.0 } else { raw.max(1e-18) };
    Ok(Panel {
        a,
        b,
        value,
        error,
    })
}

/// Adaptive estimate of the integral of `f` over `[a, b]` with absolute
/// error estimate at most `tol`.
pub fn quad1d<F>(mut f: F, a: f64, b: f64, tol: f64, trace: &Trace) -> Result<f64, IntegrateError>
where
    F: FnMut(f64) -> Result<f64, IntegrateError>,
{
    assert!(tol > 0.0, "tolerance must be positive");
    trace.count_quad1d();
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let total_len = hi - lo;
    let mut stack = vec![kronrod_panel(&mut f, lo, hi)?];
    let mut done: Vec<Panel> = Vec::new();
    let max_panels = 4000;
    while let Some(p) = stack.pop() {
        let budget = tol * ((p.b - p.a) / total_len).max(1e-16);
        if p.error <= budget || (p.b - p.a) < 1e-14 * total_len {
            done.push(p);
            continue;
        }
        if done.len() + stack.len() >= max_panels {
            let achieved: f64 = done.iter().map(|q| q.error).sum::<f64>()
                + stack.iter().map(|q| q.error).sum::<f64>()
                + p.error;
            return Err(IntegrateError::ToleranceNotMet {
                achieved,
                requested: tol,
            });
        }
        let mid = 0.5 * (p.a + p.b);
        stack.push(kronrod_panel(&mut f, p.a, mid)?);
        stack.push(kronrod_panel(&mut f, mid, p.b)?);
    }
    let total_err: f64 = done.iter().map(|p| p.error).sum();
    if total_err > tol * 8.0 {
        return Err(IntegrateError::ToleranceNotMet {
            achieved: total_err,
            requested: tol,
        });
    }
    Ok(sign * done.iter().map(|p| p.value).sum::<f64>())
}

/// Flow of the autonomous scalar equation `x' = f(x)` realized as the
/// inversion of the time function `T(x) = integral of du/f(u)` from `x0`.
/// Accepted (t, x) pairs are kept as anchors so later queries only integrate
/// the missing stretch.
pub struct AutonomousFlow {
    f: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
    x0: f64,
    tol: f64,
    trace: Trace,
    equilibrium: bool,
    anchors: RefCell<AnchorMap<f64>>,
}

impl AutonomousFlow {
    pub fn new(
        f: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
        x0: f64,
        tol: f64,
        trace: Trace,
    ) -> Result<AutonomousFlow, IntegrateError> {
        let f0 = (f)(x0)?;
        let equilibrium = f0.abs() <= 1e-13 * (1.0 + x0.abs());
        Ok(AutonomousFlow {
            f,
            x0,
            tol,
            trace,
            equilibrium,
            anchors: RefCell::new(AnchorMap::new(0.0, x0)),
        })
    }

    fn time_step(&self, from_x: f64, to_x: f64) -> Result<f64, IntegrateError> {
        quad1d(
            |u| {
                let v = (self.f)(u)?;
                if v == 0.0 {
                    return Err(IntegrateError::NonFiniteIntegrand { at: u });
                }
                Ok(1.0 / v)
            },
            from_x,
            to_x,
            self.tol,
            &self.trace,
        )
    }

    /// State at time `t` (t = 0 corresponds to `x0`).
    pub fn eval(&self, t: f64) -> Result<f64, IntegrateError> {
        if self.equilibrium || t == 0.0 {
            return Ok(self.x0);
        }
        // nearest anchor
        let (mut t_cur, mut x_cur) = self.anchors.borrow().nearest(t);
        if (t_cur - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            return Ok(x_cur);
        }

        // Bracket by marching in x until the accumulated time passes t.
        let mut iterations = 0usize;
        let (x_lo, x_hi, t_lo, t_hi) = loop {
            iterations += 1;
            if iterations > 200 {
                return Err(IntegrateError::InversionFailed { target_time: t });
            }
            if (t_cur - t).abs() <= 1e-14 * (1.0 + t.abs()) {
                self.anchors.borrow_mut().insert(t, x_cur);
                return Ok(x_cur);
            }
            let remaining = t - t_cur;
            let f_cur = (self.f)(x_cur)?;
            if f_cur.abs() <= 1e-13 * (1.0 + x_cur.abs()) {
                // ran into an equilibrium: T diverges, t unreachable in practice
                return Err(IntegrateError::InversionFailed { target_time: t });
            }
            let mut dt_step = remaining.abs().min(0.5) * remaining.signum();
            let mut accepted = None;
            for _ in 0..60 {
                let x_next = x_cur + f_cur * dt_step;
                if !x_next.is_finite() {
                    dt_step *= 0.5;
                    continue;
                }
                let f_next = match (self.f)(x_next) {
                    Ok(v) => v,
                    Err(_) => {
                        dt_step *= 0.5;
                        continue;
                    }
                };
                if f_next * f_cur <= 0.0 {
                    // crossed an equilibrium of f; shrink the step
                    dt_step *= 0.5;
                    continue;
                }
                match self.time_step(x_cur, x_next) {
                    Ok(dt_real) => {
                        accepted = Some((x_next, dt_real));
                        break;
                    }
                    Err(_) => {
                        dt_step *= 0.5;
                        continue;
                    }
                }
            }
            let (x_next, dt_real) = match accepted {
                Some(v) => v,
                None => return Err(IntegrateError::InversionFailed { target_time: t }),
            };
            let t_next = t_cur + dt_real;
            if (t_next - t) * (t_cur - t) <= 0.0 {
                break (x_cur, x_next, t_cur, t_next);
            }
            if x_next.abs() > 1e7 {
                // blow-up: T converges while x runs away
                let (lo, hi) = if t_next >= t_cur {
                    (t_next, t_next + dt_real.abs().max(1e-12))
                } else {
                    (t_next - dt_real.abs().max(1e-12), t_next)
                };
                return Err(IntegrateError::LeftMaximalInterval { t_low: lo, t_high: hi });
            }
            t_cur = t_next;
            x_cur = x_next;
        };

        // Newton with bisection fallback inside the bracket.
        self.trace.count_newton();
        let (mut xa, mut xb, mut ta, tb) = (x_lo, x_hi, t_lo, t_hi);
        let _ = tb;
        let mut x = xa;
        let mut t_at_x = ta;
        for _ in 0..80 {
            if (t_at_x - t).abs() <= self.tol.max(1e-13) * (1.0 + t.abs()) {
                self.anchors.borrow_mut().insert(t, x);
                return Ok(x);
            }
            let fx = (self.f)(x)?;
            let newton = x + (t - t_at_x) * fx;
            let inside = (newton - xa) * (newton - xb) < 0.0 || newton == xa || newton == xb;
            let x_new = if inside { newton } else { 0.5 * (xa + xb) };
            let t_new = t_at_x + self.time_step(x, x_new)?;
            // maintain the bracket
            if (t_new - t) * (ta - t) > 0.0 {
                xa = x_new;
                ta = t_new;
            } else {
                xb = x_new;
            }
            x = x_new;
            t_at_x = t_new;
        }
        Err(IntegrateError::InversionFailed { target_time: t })
    }
}

/// Solve `x' = f(x)`, `x(0) = x0` on the given time grid by one quadrature
/// and monotone inversion.
pub fn solve_autonomous_1d<F>(
    f: F,
    x0: f64,
    tgrid: &[f64],
    tol: f64,
    trace: &Trace,
) -> Result<Vec<f64>, IntegrateError>
where
    F: Fn(f64) -> Result<f64, IntegrateError> + 'static,
{
    let flow = AutonomousFlow::new(Box::new(f), x0, tol, trace.clone())?;
    tgrid.iter().map(|&t| flow.eval(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> Trace {
        Trace::new()
    }

    #[test]
    fn arctangent_integral() {
        let trace = tr();
        let v = quad1d(|y| Ok(1.0 / (1.0 + y * y)), 0.0, 1.0, 1e-12, &trace).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-10, "got {}", v);
        assert_eq!(trace.snapshot().quad1d_calls, 1);
    }

    #[test]
    fn trivial_integrals() {
        let trace = tr();
        assert_eq!(quad1d(|_| Ok(0.0), 0.0, 1.0, 1e-12, &trace).unwrap(), 0.0);
        let v = quad1d(|y| Ok(3.0 * y * y), 0.0, 1.0, 1e-12, &trace).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        // orientation
        let v = quad1d(|_| Ok(2.0), 1.0, 0.0, 1e-12, &trace).unwrap();
        assert!((v + 2.0).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let trace = tr();
        let r = quad1d(|x| Ok(1.0 / x), -1.0, 1.0, 1e-10, &trace);
        assert!(matches!(
            r,
            Err(IntegrateError::NonFiniteIntegrand { .. })
                | Err(IntegrateError::ToleranceNotMet { .. })
        ));
    }

    #[test]
    fn hard_singularity_reports_tolerance_failure() {
        let trace = tr();
        let r = quad1d(
            |x| Ok(if x > 0.0 { x.powf(-0.99) } else { 0.0 }),
            0.0,
            1.0,
            1e-13,
            &trace,
        );
        assert!(r.is_err());
    }

    #[test]
    fn autonomous_tangent_solution() {
        // x' = 1 + x^2 from 0: x(t) = tan t; value checked against the
        // closed form at t = 0.5.
        let trace = tr();
        let grid = [0.1, 0.25, 0.5, 1.0, 1.2];
        let xs = solve_autonomous_1d(|x| Ok(1.0 + x * x), 0.0, &grid, 1e-12, &trace).unwrap();
        for (t, x) in grid.iter().zip(&xs) {
            assert!((x - t.tan()).abs() < 1e-9, "t={} got {} want {}", t, x, t.tan());
        }
        assert!((xs[2] - 0.5463024898).abs() < 1e-9);
        assert_eq!(trace.snapshot().ode_steps, 0);
    }

    #[test]
    fn autonomous_trivial_and_equilibrium() {
        let trace = tr();
        let xs = solve_autonomous_1d(|_| Ok(1.0), 0.0, &[0.3, 1.7], 1e-12, &trace).unwrap();
        assert!((xs[0] - 0.3).abs() < 1e-12 && (xs[1] - 1.7).abs() < 1e-12);
        let xs = solve_autonomous_1d(|x| Ok(x), 0.0, &[0.5, 2.0], 1e-12, &trace).unwrap();
        assert_eq!(xs, vec![0.0, 0.0]);
    }

    #[test]
    fn blow_up_is_detected_with_bracket() {
        // tan blows up at pi/2; asking for t = 2 must fail with a bracket.
        let trace = tr();
        let r = solve_autonomous_1d(|x| Ok(1.0 + x * x), 0.0, &[2.0], 1e-10, &trace);
        match r {
            Err(IntegrateError::LeftMaximalInterval { t_low, t_high }) => {
                assert!(t_low <= 2.0);
                assert!(t_low <= t_high);
                assert!((t_low - std::f64::consts::FRAC_PI_2).abs() < 0.2);
            }
            other => panic!("expected LeftMaximalInterval, got {:?}", other),
        }
    }

    #[test]
    fn backwards_time_works() {
        let trace = tr();
        let xs = solve_autonomous_1d(|x| Ok(1.0 + x * x), 0.0, &[-0.5], 1e-12, &trace).unwrap();
        assert!((xs[0] - (-0.5f64).tan()).abs() < 1e-9);
    }

    #[test]
    fn exponential_growth() {
        let trace = tr();
        let xs = solve_autonomous_1d(|x| Ok(x), 1.0, &[1.0], 1e-12, &trace).unwrap();
        assert!((xs[0] - std::f64::consts::E).abs() < 1e-9);
    }
}
