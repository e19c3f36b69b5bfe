//! Independent reference oracle: embedded Dormand–Prince 5(4) with dense
//! output. This is the one place in the crate where ODE time stepping is
//! allowed; every accepted step is counted in the trace so the audit can
//! prove the quadrature pipeline never came through here.

use super::HarnessError;
use crate::integrate::{Trace, Trajectory, TrajectoryMode};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients b - bhat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense-output coefficients
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub type OdeFn<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>, HarnessError>;

struct DenseSegment {
    t: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    fn interpolate(&self, t: f64) -> Vec<f64> {
        let theta = (t - self.t) / self.h;
        let omt = 1.0 - theta;
        let n = self.rcont[0].len();
        (0..n)
            .map(|i| {
                self.rcont[0][i]
                    + theta
                        * (self.rcont[1][i]
                            + omt
                                * (self.rcont[2][i]
                                    + theta * (self.rcont[3][i] + omt * self.rcont[4][i])))
            })
            .collect()
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        for (o, ki) in out.iter_mut().zip(*k) {
            *o += h * c * ki;
        }
    }
    out
}

struct Stepper<'a> {
    f: OdeFn<'a>,
    trace: Trace,
}

struct StepResult {
    y1: Vec<f64>,
    err_norm: f64,
    k1: Vec<f64>,
    k7: Vec<f64>,
    dense: [Vec<f64>; 5],
}

impl<'a> Stepper<'a> {
    fn step(&self, t: f64, y: &[f64], h: f64, k1: &[f64], tol: f64) -> Result<StepResult, HarnessError> {
        let _ = t;
        let f = self.f;
        let k2 = f(&axpy(y, h, &[(A21, k1)]))?;
        let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(&axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ))?;
        let y1 = axpy(
            y,
            h,
            &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(&y1)?;
        let n = y.len();
        let mut err_norm = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                    + E7 * k7[i]);
            let scale = tol + tol * y[i].abs().max(y1[i].abs());
            err_norm += (e / scale) * (e / scale);
        }
        err_norm = (err_norm / n as f64).sqrt();
        // dense-output polynomial pieces
        let dy: Vec<f64> = y1.iter().zip(y).map(|(a, b)| a - b).collect();
        let bspl: Vec<f64> = (0..n).map(|i| h * k1[i] - dy[i]).collect();
        let r4: Vec<f64> = (0..n).map(|i| dy[i] - h * k7[i] - bspl[i]).collect();
        let r5: Vec<f64> = (0..n)
            .map(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                    + D7 * k7[i])
            })
            .collect();
        Ok(StepResult {
            y1,
            err_norm,
            k1: k1.to_vec(),
            k7,
            dense: [y.to_vec(), dy, bspl, r4, r5],
        })
    }
}

/// Adaptive integration of `y' = f(y)` over the span of `tgrid`, sampled on
/// the grid through 4th-order dense output. On step-size underflow (e.g. at
/// a blow-up) the error carries the last time reached and the partial
/// trajectory on the covered grid prefix.
pub fn reference_rk(
    f: OdeFn<'_>,
    x0: &[f64],
    tgrid: &[f64],
    tol: f64,
    trace: &Trace,
) -> Result<Trajectory, HarnessError> {
    assert!(tgrid.len() >= 1 && tgrid.windows(2).all(|w| w[0] < w[1]));
    let t0 = tgrid[0];
    let t_end = *tgrid.last().unwrap();
    let span = (t_end - t0).max(1e-12);
    let stepper = Stepper {
        f,
        trace: trace.clone(),
    };
    let mut states: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut grid_idx = 1;

    if tgrid.len() == 1 {
        return Ok(Trajectory::new(
            tgrid.to_vec(),
            states,
            trace.snapshot(),
            TrajectoryMode::Reference,
        ));
    }

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k1 = f(&y)?;
    let mut h = (span / 100.0).min(0.1).max(1e-6);
    let underflow = |t_reached: f64, partial: Vec<Vec<f64>>, covered: usize| {
        HarnessError::StepSizeUnderflow {
            t_reached,
            partial: Trajectory::new(
                tgrid[..covered].to_vec(),
                partial,
                trace.snapshot(),
                TrajectoryMode::Reference,
            ),
        }
    };

    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > 1_000_000 {
            return Err(underflow(t, states, grid_idx));
        }
        if h < 1e-14 * span {
            return Err(underflow(t, states, grid_idx));
        }
        let h_eff = h.min(t_end - t);
        let result = match stepper.step(t, &y, h_eff, &k1, tol) {
            Ok(r) => r,
            Err(_) => {
                // evaluation failure inside the step (pole): shrink
                h *= 0.25;
                continue;
            }
        };
        if result.err_norm <= 1.0 {
            stepper.trace.count_ode_step();
            let seg = DenseSegment {
                t,
                h: h_eff,
                rcont: result.dense,
            };
            let t_new = t + h_eff;
            while grid_idx < tgrid.len() && tgrid[grid_idx] <= t_new + 1e-13 * span {
                states.push(seg.interpolate(tgrid[grid_idx].min(t_new)));
                grid_idx += 1;
            }
            t = t_new;
            y = result.y1;
            k1 = result.k7; // FSAL
            let _ = result.k1;
            let factor = (0.9 * result.err_norm.powf(-0.2)).clamp(0.2, 5.0);
            h = h_eff * factor;
        } else {
            let factor = (0.9 * result.err_norm.powf(-0.2)).clamp(0.1, 1.0);
            h = h_eff * factor;
        }
    }
    while grid_idx < tgrid.len() {
        states.push(y.clone());
        grid_idx += 1;
    }
    Ok(Trajectory::new(
        tgrid.to_vec(),
        states,
        trace.snapshot(),
        TrajectoryMode::Reference,
    ))
}

/// Fixed-step Dormand–Prince, used by the oracle's own convergence-order
/// self test.
pub fn rk_fixed(
    f: OdeFn<'_>,
    x0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    trace: &Trace,
) -> Result<Vec<f64>, HarnessError> {
    let stepper = Stepper {
        f,
        trace: trace.clone(),
    };
    let h = (t1 - t0) / steps as f64;
    let mut y = x0.to_vec();
    let mut t = t0;
    let mut k1 = f(&y)?;
    for _ in 0..steps {
        let r = stepper.step(t, &y, h, &k1, 1e-6)?;
        stepper.trace.count_ode_step();
        y = r.y1;
        k1 = r.k7;
        t += h;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> Trace {
        Trace::new()
    }

    #[test]
    fn tangent_equation_reference_values() {
        let trace = tr();
        let f = |y: &[f64]| -> Result<Vec<f64>, HarnessError> { Ok(vec![1.0 + y[0] * y[0]]) };
        let grid = [0.0, 0.25, 0.5];
        let traj = reference_rk(&f, &[0.0], &grid, 1e-10, &trace).unwrap();
        assert!((traj.states[2][0] - 0.5463024898).abs() < 1e-9);
        assert!(traj.trace.ode_steps > 0);
        assert_eq!(traj.mode, TrajectoryMode::Reference);
    }

    #[test]
    fn constants_and_exponentials() {
        let trace = tr();
        let f = |_: &[f64]| -> Result<Vec<f64>, HarnessError> { Ok(vec![0.0]) };
        let traj = reference_rk(&f, &[2.5], &[0.0, 1.0], 1e-9, &trace).unwrap();
        assert_eq!(traj.states[1][0], 2.5);
        let f = |y: &[f64]| -> Result<Vec<f64>, HarnessError> { Ok(vec![y[0]]) };
        let traj = reference_rk(&f, &[1.0], &[0.0, 1.0], 1e-10, &trace).unwrap();
        assert!((traj.states[1][0] - 2.718281828f64).abs() < 1e-9);
    }

    #[test]
    fn observed_order_is_at_least_four() {
        // fixed-step self test on the tangent equation
        let trace = tr();
        let f = |y: &[f64]| -> Result<Vec<f64>, HarnessError> { Ok(vec![1.0 + y[0] * y[0]]) };
        let exact = 1.0f64.tan();
        let e1 = (rk_fixed(&f, &[0.0], 0.0, 1.0, 20, &trace).unwrap()[0] - exact).abs();
        let e2 = (rk_fixed(&f, &[0.0], 0.0, 1.0, 40, &trace).unwrap()[0] - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "observed order {}", order);
    }

    #[test]
    fn blow_up_reports_underflow_with_partial() {
        let trace = tr();
        let f = |y: &[f64]| -> Result<Vec<f64>, HarnessError> { Ok(vec![1.0 + y[0] * y[0]]) };
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        match reference_rk(&f, &[0.0], &grid, 1e-10, &trace) {
            Err(HarnessError::StepSizeUnderflow { t_reached, partial }) => {
                assert!((t_reached - std::f64::consts::FRAC_PI_2).abs() < 0.05);
                assert!(partial.times.len() >= 15);
                // the partial prefix is still accurate
                let k = partial.times.len() - 1;
                assert!((partial.states[k][0] - partial.times[k].tan()).abs() < 1e-7);
            }
            other => panic!("expected StepSizeUnderflow, got {:?}", other.map(|t| t.times)),
        }
    }

    #[test]
    fn dense_output_hits_grid_points_accurately() {
        let trace = tr();
        let f = |y: &[f64]| -> Result<Vec<f64>, HarnessError> {
            Ok(vec![y[1], -y[0]])
        };
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let traj = reference_rk(&f, &[1.0, 0.0], &grid, 1e-11, &trace).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[0] - t.cos()).abs() < 1e-8, "cos({}) deviation {}", t, (s[0] - t.cos()).abs());
            assert!((s[1] + t.sin()).abs() < 1e-8);
        }
    }
}
