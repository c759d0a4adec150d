//! Adaptive embedded Runge–Kutta 5(4) (Dormand–Prince pair) with piecewise
//! Hermite dense output. Event locations are refined by re-integrating from
//! the stored step start, so their accuracy is set by the tolerance, not by
//! the interpolant.

use crate::error::{Error, Result};

/// Right-hand side dy/dt = f(t, y) writing into `out`.
pub type Rhs<'a> = &'a (dyn Fn(f64, &[f64], &mut [f64]) + Sync);

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-12, atol: 1e-14, h_max: f64::INFINITY, max_steps: 100_000 }
    }
}

/// One accepted step with endpoint derivatives (cubic Hermite segment).
#[derive(Debug, Clone)]
pub struct OdeStep {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub steps: Vec<OdeStep>,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.t1)
    }

    pub fn y_end(&self) -> &[f64] {
        &self.steps.last().expect("empty solution").y1
    }

    fn segment(&self, t: f64) -> &OdeStep {
        let i = self
            .steps
            .partition_point(|s| s.t1 < t)
            .min(self.steps.len() - 1);
        &self.steps[i]
    }

    /// Dense evaluation by cubic Hermite interpolation on the owning step.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let s = self.segment(t);
        let h = s.t1 - s.t0;
        let u = ((t - s.t0) / h).clamp(0.0, 1.0);
        let u2 = u * u;
        let u3 = u2 * u;
        let (c0, c1, c2, c3) = (
            2.0 * u3 - 3.0 * u2 + 1.0,
            u3 - 2.0 * u2 + u,
            -2.0 * u3 + 3.0 * u2,
            u3 - u2,
        );
        for k in 0..out.len() {
            out[k] = c0 * s.y0[k] + c1 * h * s.f0[k] + c2 * s.y1[k] + c3 * h * s.f1[k];
        }
    }

    /// Dense evaluation of the derivative dy/dt.
    pub fn eval_deriv(&self, t: f64, out: &mut [f64]) {
        let s = self.segment(t);
        let h = s.t1 - s.t0;
        let u = ((t - s.t0) / h).clamp(0.0, 1.0);
        let u2 = u * u;
        let (d0, d1, d2, d3) = (
            (6.0 * u2 - 6.0 * u) / h,
            3.0 * u2 - 4.0 * u + 1.0,
            (-6.0 * u2 + 6.0 * u) / h,
            3.0 * u2 - 2.0 * u,
        );
        for k in 0..out.len() {
            out[k] = d0 * s.y0[k] + d1 * s.f0[k] + d2 * s.y1[k] + d3 * s.f1[k];
        }
    }
}

// Dormand–Prince coefficients.
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 4th-order weights for the error estimate.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate from (t0, y0) to exactly t_end (forward only).
pub fn integrate(
    rhs: Rhs,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    if !(t_end > t0) {
        return Err(Error::Config("ode integration needs t_end > t_start".into()));
    }
    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f_now = vec![0.0; dim];
    rhs(t, &y, &mut f_now);

    let span = t_end - t0;
    let mut h = (span / 100.0).min(opts.h_max);
    let mut steps = Vec::new();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut y_stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];

    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok(OdeSolution { steps });
        }
        h = h.min(t_end - t);
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::StepUnderflow { t });
        }

        k[0].copy_from_slice(&f_now); // FSAL
        for s in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            rhs(t + C[s] * h, &y_stage, &mut k[s + 1]);
        }
        // 5th-order solution: the A row for stage 7 doubles as b5 (FSAL)
        for i in 0..dim {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(6) {
                acc += A[5][j] * kj[i];
            }
            y5[i] = y[i] + h * acc;
        }
        // error = y5 - y4
        let mut err = 0.0f64;
        for i in 0..dim {
            let mut acc4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc4 += B4[j] * kj[i];
            }
            let y4i = y[i] + h * acc4;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4i) / scale;
            err += e * e;
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            // k[6] = f(t+h, y5) by construction of the FSAL pair
            steps.push(OdeStep {
                t0: t,
                t1: t + h,
                y0: y.clone(),
                y1: y5.clone(),
                f0: k[0].clone(),
                f1: k[6].clone(),
            });
            t += h;
            y.copy_from_slice(&y5);
            f_now.copy_from_slice(&k[6]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(opts.h_max);
    }
    Err(Error::Config("ode step budget exhausted".into()))
}

/// First t in (t_start, t_end] where component `comp` crosses zero from
/// positive values, refined by re-integration bisection to full precision.
/// Returns the crossing time and state, or None when no sign change occurs.
pub fn first_zero_crossing(
    rhs: Rhs,
    sol: &OdeSolution,
    comp: usize,
    opts: &OdeOptions,
) -> Result<Option<(f64, Vec<f64>)>> {
    let Some(step) = sol
        .steps
        .iter()
        .find(|s| s.y0[comp] > 0.0 && s.y1[comp] <= 0.0)
    else {
        return Ok(None);
    };
    if step.y1[comp] == 0.0 {
        return Ok(Some((step.t1, step.y1.clone())));
    }
    // value at t by a fresh short integration from the step start
    let probe = |t: f64| -> Result<Vec<f64>> {
        if t <= step.t0 {
            return Ok(step.y0.clone());
        }
        let part = integrate(rhs, step.t0, &step.y0, t, opts)?;
        Ok(part.y_end().to_vec())
    };
    let (mut lo, mut hi) = (step.t0, step.t1);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ym = probe(mid)?;
        if ym[comp] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_zero = 0.5 * (lo + hi);
    Ok(Some((t_zero, probe(t_zero)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| out[0] = -y[0];
        let sol = integrate(&rhs, 0.0, &[1.0], 5.0, &OdeOptions::default()).unwrap();
        assert!((sol.y_end()[0] - (-5.0f64).exp()).abs() < 1e-11);
        // dense output mid-span
        let mut buf = [0.0];
        sol.eval(2.5, &mut buf);
        assert!((buf[0] - (-2.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_phase_is_accurate() {
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[1];
            out[1] = -y[0];
        };
        let sol =
            integrate(&rhs, 0.0, &[1.0, 0.0], 10.0, &OdeOptions::default()).unwrap();
        assert!((sol.y_end()[0] - 10.0f64.cos()).abs() < 1e-10);
        assert!((sol.y_end()[1] + 10.0f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn zero_crossing_of_cosine_is_half_pi() {
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[1];
            out[1] = -y[0];
        };
        let opts = OdeOptions::default();
        let sol = integrate(&rhs, 0.0, &[1.0, 0.0], 3.0, &opts).unwrap();
        let (t, y) = first_zero_crossing(&rhs, &sol, 0, &opts).unwrap().unwrap();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12, "t = {t}");
        assert!((y[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn no_crossing_reports_none() {
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| out[0] = -y[0];
        let opts = OdeOptions::default();
        let sol = integrate(&rhs, 0.0, &[1.0], 4.0, &opts).unwrap();
        assert!(first_zero_crossing(&rhs, &sol, 0, &opts).unwrap().is_none());
    }

    #[test]
    fn stiff_step_budget_errors_cleanly() {
        let rhs = |_t: f64, _y: &[f64], out: &mut [f64]| out[0] = 1.0;
        let opts = OdeOptions { max_steps: 3, ..OdeOptions::default() };
        match integrate(&rhs, 0.0, &[0.0], 1.0e6, &opts) {
            Err(Error::Config(_)) => {}
            other => panic!("expected step budget error, got {other:?}"),
        }
    }
}
