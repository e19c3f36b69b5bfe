//! Closed-form linear solvers: the two-quadrature formula for a scalar
//! linear equation with time-dependent coefficients, and the
//! matrix-exponential formula for constant-coefficient systems.

use super::anchors::AnchorMap;
use super::quad::quad1d;
use super::{IntegrateError, Trace};
use nalgebra::DMatrix;
use std::cell::RefCell;

/// Matrix exponential. Sizes 1 and 2 use closed forms by eigenstructure;
/// larger sizes use scaling and squaring with a Padé core.
pub fn matexp(h: &DMatrix<f64>, trace: &Trace) -> DMatrix<f64> {
    trace.count_matexp();
    let n = h.nrows();
    assert_eq!(n, h.ncols());
    match n {
        0 => DMatrix::zeros(0, 0),
        1 => DMatrix::from_element(1, 1, h[(0, 0)].exp()),
        2 => matexp2(h),
        _ => matexp_pade(h, trace),
    }
}

fn matexp2(h: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b, c, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
    let mu = 0.5 * (a + d);
    // B = H - mu I satisfies B^2 = delta2 * I
    let delta2 = 0.25 * (a - d) * (a - d) + b * c;
    let (cosh_like, sinc_like) = if delta2.abs() < 1e-6 {
        // series in delta2, accurate to ~1e-20 at this threshold
        (
            1.0 + delta2 / 2.0 + delta2 * delta2 / 24.0,
            1.0 + delta2 / 6.0 + delta2 * delta2 / 120.0,
        )
    } else if delta2 > 0.0 {
        let delta = delta2.sqrt();
        (delta.cosh(), delta.sinh() / delta)
    } else {
        let omega = (-delta2).sqrt();
        (omega.cos(), omega.sin() / omega)
    };
    let emu = mu.exp();
    let mut out = DMatrix::zeros(2, 2);
    out[(0, 0)] = emu * (cosh_like + sinc_like * (a - mu));
    out[(0, 1)] = emu * sinc_like * b;
    out[(1, 0)] = emu * sinc_like * c;
    out[(1, 1)] = emu * (cosh_like + sinc_like * (d - mu));
    out
}

fn matexp_pade(h: &DMatrix<f64>, trace: &Trace) -> DMatrix<f64> {
    let n = h.nrows();
    let norm = h.iter().map(|x| x.abs()).fold(0.0f64, f64::max) * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = h / 2f64.powi(s);
    // Padé(6,6) coefficients
    let mut c = vec![1.0f64];
    for k in 0..6 {
        let prev = c[k];
        c.push(prev * (6.0 - k as f64) / ((12.0 - k as f64) * (k as f64 + 1.0)));
    }
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let ident = DMatrix::<f64>::identity(n, n);
    let u = &a * (&ident * c[1] + &a2 * c[3] + &a4 * c[5]);
    let v = &ident * c[0] + &a2 * c[2] + &a4 * c[4] + &a6 * c[6];
    trace.count_linear_solve();
    let num = &v + &u;
    let den = &v - &u;
    let mut f = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is invertible for scaled input");
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

/// Flow of the scalar equation `x' = c1(t) x + c0(t)`:
/// `x(t) = exp(F(t)) [x0 + G(t)]` with `F(t)` the integral of `c1` and
/// `G(t)` the integral of `exp(-F) c0`, both evaluated by nested adaptive
/// quadrature with accumulated anchors.
pub struct ScalarLinearFlow {
    c1: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
    c0: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
    x0: f64,
    tol: f64,
    trace: Trace,
    f_anchors: RefCell<AnchorMap<f64>>,
    g_anchors: RefCell<AnchorMap<f64>>,
}

impl ScalarLinearFlow {
    pub fn new(
        c1: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
        c0: Box<dyn Fn(f64) -> Result<f64, IntegrateError>>,
        x0: f64,
        tol: f64,
        trace: Trace,
    ) -> ScalarLinearFlow {
        ScalarLinearFlow {
            c1,
            c0,
            x0,
            tol,
            trace,
            f_anchors: RefCell::new(AnchorMap::new(0.0, 0.0)),
            g_anchors: RefCell::new(AnchorMap::new(0.0, 0.0)),
        }
    }

    fn exponent(&self, t: f64) -> Result<f64, IntegrateError> {
        let (t0, f0) = self.f_anchors.borrow().nearest(t);
        if (t0 - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            return Ok(f0);
        }
        let df = quad1d(|u| (self.c1)(u), t0, t, self.tol, &self.trace)?;
        let val = f0 + df;
        self.f_anchors.borrow_mut().insert(t, val);
        Ok(val)
    }

    pub fn eval(&self, t: f64) -> Result<f64, IntegrateError> {
        let (t0, g0) = self.g_anchors.borrow().nearest(t);
        let g = if (t0 - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            g0
        } else {
            let dg = quad1d(
                |u| {
                    let fe = self.exponent(u)?;
                    let c0 = (self.c0)(u)?;
                    Ok((-fe).exp() * c0)
                },
                t0,
                t,
                self.tol,
                &self.trace,
            )?;
            let val = g0 + dg;
            self.g_anchors.borrow_mut().insert(t, val);
            val
        };
        let f = self.exponent(t)?;
        Ok(f.exp() * (self.x0 + g))
    }
}

/// Flow of `x' = H x + b(t)` with constant `H`:
/// `x(t) = exp(H t) [x0 + integral of exp(-H t') b(t')]`, the integral done
/// componentwise by adaptive quadrature.
pub struct LinearConstFlow {
    h: DMatrix<f64>,
    b: Box<dyn Fn(f64) -> Result<Vec<f64>, IntegrateError>>,
    x0: Vec<f64>,
    tol: f64,
    trace: Trace,
    anchors: RefCell<AnchorMap<Vec<f64>>>,
    exp_cache: RefCell<Vec<(f64, DMatrix<f64>)>>,
}

impl LinearConstFlow {
    pub fn new(
        h: DMatrix<f64>,
        b: Box<dyn Fn(f64) -> Result<Vec<f64>, IntegrateError>>,
        x0: Vec<f64>,
        tol: f64,
        trace: Trace,
    ) -> LinearConstFlow {
        let r = x0.len();
        assert_eq!(h.nrows(), r);
        LinearConstFlow {
            h,
            b,
            x0,
            tol,
            trace,
            anchors: RefCell::new(AnchorMap::new(0.0, vec![0.0; r])),
            exp_cache: RefCell::new(Vec::new()),
        }
    }

    fn exp_minus_h(&self, t: f64) -> DMatrix<f64> {
        {
            let cache = self.exp_cache.borrow();
            if let Some((_, m)) = cache.iter().find(|(tc, _)| *tc == t) {
                return m.clone();
            }
        }
        let m = matexp(&(&self.h * (-t)), &self.trace);
        let mut cache = self.exp_cache.borrow_mut();
        if cache.len() > 512 {
            cache.clear();
        }
        cache.push((t, m.clone()));
        m
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let r = self.x0.len();
        let (t0, i0) = self.anchors.borrow().nearest(t);
        let integral = if (t0 - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            i0
        } else {
            let mut integral = i0;
            for comp in 0..r {
                let di = quad1d(
                    |u| {
                        let e = self.exp_minus_h(u);
                        let bv = (self.b)(u)?;
                        let mut acc = 0.0;
                        for (j, bj) in bv.iter().enumerate() {
                            acc += e[(comp, j)] * bj;
                        }
                        Ok(acc)
                    },
                    t0,
                    t,
                    self.tol,
                    &self.trace,
                )?;
                integral[comp] += di;
            }
            self.anchors.borrow_mut().insert(t, integral.clone());
            integral
        };
        let e = matexp(&(&self.h * t), &self.trace);
        let mut out = vec![0.0; r];
        for i in 0..r {
            for j in 0..r {
                out[i] += e[(i, j)] * (self.x0[j] + integral[j]);
            }
        }
        Ok(out)
    }
}

/// Solve `x' = c1(t) x + c0(t)` on a time grid by two nested quadratures.
pub fn solve_scalar_linear_td<F1, F0>(
    c1: F1,
    c0: F0,
    x0: f64,
    tgrid: &[f64],
    tol: f64,
    trace: &Trace,
) -> Result<Vec<f64>, IntegrateError>
where
    F1: Fn(f64) -> Result<f64, IntegrateError> + 'static,
    F0: Fn(f64) -> Result<f64, IntegrateError> + 'static,
{
    let flow = ScalarLinearFlow::new(Box::new(c1), Box::new(c0), x0, tol, trace.clone());
    tgrid.iter().map(|&t| flow.eval(t)).collect()
}

/// Solve `x' = H x + b(t)` on a time grid via the matrix-exponential formula.
pub fn solve_linear_const<F>(
    h: &DMatrix<f64>,
    b: F,
    x0: &[f64],
    tgrid: &[f64],
    tol: f64,
    trace: &Trace,
) -> Result<Vec<Vec<f64>>, IntegrateError>
where
    F: Fn(f64) -> Result<Vec<f64>, IntegrateError> + 'static,
{
    let flow = LinearConstFlow::new(h.clone(), Box::new(b), x0.to_vec(), tol, trace.clone());
    tgrid.iter().map(|&t| flow.eval(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> Trace {
        Trace::new()
    }

    /// 30-term power-series oracle for the matrix exponential.
    pub fn matexp_series(h: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = h.nrows();
        let mut acc = DMatrix::<f64>::identity(n, n);
        let mut pow = DMatrix::<f64>::identity(n, n);
        let mut fact = 1.0f64;
        for k in 1..=terms {
            pow = &pow * h;
            fact *= k as f64;
            acc += &pow / fact;
        }
        acc
    }

    #[test]
    fn matexp_closed_forms() {
        let trace = tr();
        let z = DMatrix::<f64>::zeros(2, 2);
        let e = matexp(&z, &trace);
        assert!((&e - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-15);

        // rotation generator: exp(t J) is a rotation matrix
        let t = std::f64::consts::FRAC_PI_2;
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]) * t;
        let e = matexp(&j, &trace);
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!((&e - &want).abs().max() < 1e-14);

        let d = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, -1.3]);
        let e = matexp(&d, &trace);
        assert!((e[(0, 0)] - 0.7f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-1.3f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn matexp_matches_series_oracle() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let trace = tr();
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..100 {
            let mut m = DMatrix::<f64>::zeros(2, 2);
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            let scale = m.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            if scale > 0.0 {
                m /= scale;
                m *= rng.gen_range(0.0..2.0);
            }
            let got = matexp(&m, &trace);
            let want = matexp_series(&m, 30);
            assert!(
                (&got - &want).abs().max() < 1e-12,
                "mismatch {:?}",
                (&got - &want).abs().max()
            );
        }
    }

    #[test]
    fn matexp_pade_on_larger_sizes() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let trace = tr();
        let mut rng = StdRng::seed_from_u64(78);
        for _ in 0..20 {
            let m = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.gen_range(-0.8..0.8));
            let got = matexp(&m, &trace);
            let want = matexp_series(&m, 40);
            assert!((&got - &want).abs().max() < 1e-11);
        }
    }

    #[test]
    fn scalar_linear_examples() {
        let trace = tr();
        // constant homogeneous: x0 e^{a t}
        let xs =
            solve_scalar_linear_td(|_| Ok(0.7), |_| Ok(0.0), 2.0, &[0.5, 1.0], 1e-11, &trace)
                .unwrap();
        assert!((xs[0] - 2.0 * (0.35f64).exp()).abs() < 1e-9);
        assert!((xs[1] - 2.0 * (0.7f64).exp()).abs() < 1e-9);
        // pure forcing: x0 + t
        let xs =
            solve_scalar_linear_td(|_| Ok(0.0), |_| Ok(1.0), 1.5, &[0.25, 2.0], 1e-11, &trace)
                .unwrap();
        assert!((xs[0] - 1.75).abs() < 1e-10 && (xs[1] - 3.5).abs() < 1e-10);
    }

    #[test]
    fn scalar_linear_tangent_coefficient() {
        // c1(t) = y0 + tan t, c0 = 0  =>  x(t) = x0 exp(y0 t)/cos t
        let trace = tr();
        let y0 = 0.3;
        let x0 = 1.7;
        let grid = [0.2, 0.6, 1.0];
        let xs = solve_scalar_linear_td(
            move |t: f64| Ok(y0 + t.tan()),
            |_| Ok(0.0),
            x0,
            &grid,
            1e-11,
            &trace,
        )
        .unwrap();
        for (t, x) in grid.iter().zip(&xs) {
            let want = x0 * (y0 * t).exp() / t.cos();
            assert!((x - want).abs() < 1e-8, "t={} got {} want {}", t, x, want);
        }
    }

    #[test]
    fn linear_const_examples() {
        let trace = tr();
        // H = 0: x0 + integral of b
        let h = DMatrix::<f64>::zeros(2, 2);
        let xs = solve_linear_const(&h, |_| Ok(vec![1.0, 2.0]), &[0.0, 0.0], &[1.0], 1e-11, &trace)
            .unwrap();
        assert!((xs[0][0] - 1.0).abs() < 1e-10 && (xs[0][1] - 2.0).abs() < 1e-10);
        // H = [[1]]: x0 e^t
        let h = DMatrix::from_element(1, 1, 1.0);
        let xs =
            solve_linear_const(&h, |_| Ok(vec![0.0]), &[1.0], &[1.0], 1e-11, &trace).unwrap();
        assert!((xs[0][0] - std::f64::consts::E).abs() < 1e-10);
        // rotation: from (1, 0), x(t) = (cos t, -sin t)
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let grid = [0.3, 1.1];
        let xs =
            solve_linear_const(&h, |_| Ok(vec![0.0, 0.0]), &[1.0, 0.0], &grid, 1e-11, &trace)
                .unwrap();
        for (t, x) in grid.iter().zip(&xs) {
            assert!((x[0] - t.cos()).abs() < 1e-10);
            assert!((x[1] + t.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_routes_agree_on_constant_coefficients() {
        // the two closed forms must coincide for scalar constant input
        let trace = tr();
        let grid: Vec<f64> = (1..=10).map(|k| 0.17 * k as f64).collect();
        let a = solve_scalar_linear_td(|_| Ok(-0.4), |_| Ok(0.9), 1.3, &grid, 1e-12, &trace)
            .unwrap();
        let h = DMatrix::from_element(1, 1, -0.4);
        let b = solve_linear_const(&h, |_| Ok(vec![0.9]), &[1.3], &grid, 1e-12, &trace).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y[0]).abs() < 1e-9);
        }
    }
}
