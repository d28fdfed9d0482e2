//! Dormand–Prince 5(4) integrator for linear complex systems.

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveTolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size.
    pub max_step: f64,
}

impl Default for AdaptiveTolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_step: f64::INFINITY }
    }
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stateful DOPRI5 stepper for an autonomous system `y' = f(y)`. Steps are
/// clipped so that every requested target time is hit exactly.
pub struct Dopri5<F> {
    rhs: F,
    tol: AdaptiveTolerances,
    t: f64,
    y: Vec<C64>,
    /// FSAL derivative at `(t, y)`.
    dy: Vec<C64>,
    h: f64,
    k: [Vec<C64>; 6],
    stage: Vec<C64>,
    y_new: Vec<C64>,
    dy_new: Vec<C64>,
    pub steps: usize,
    pub rejected: usize,
}

impl<F: FnMut(&[C64], &mut [C64])> Dopri5<F> {
    pub fn new(mut rhs: F, t0: f64, y0: Vec<C64>, tol: AdaptiveTolerances) -> Self {
        let n = y0.len();
        let mut dy = vec![C64::new(0.0, 0.0); n];
        rhs(&y0, &mut dy);
        let scale: f64 = rms_scaled(&y0, &y0, &tol);
        let dscale: f64 = rms_scaled(&dy, &y0, &tol);
        let h = if scale < 1e-5 || dscale < 1e-5 { 1e-6 } else { 0.01 * scale / dscale };
        let zeros = || vec![C64::new(0.0, 0.0); n];
        Self {
            rhs,
            tol,
            t: t0,
            y: y0,
            dy,
            h: h.min(tol.max_step),
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            stage: zeros(),
            y_new: zeros(),
            dy_new: zeros(),
            steps: 0,
            rejected: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    pub fn into_state(self) -> Vec<C64> {
        self.y
    }

    /// Integrates forward to `t_target` (must not precede the current time).
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t < t_target {
            let remaining = t_target - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h < 1e-13 * self.t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t: self.t, step: h });
            }
            let err = self.attempt(h);
            let err = if err.is_finite() { err } else { 1e10 };
            if err <= 1.0 {
                self.t = if last { t_target } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(&mut self.dy, &mut self.dy_new);
                self.steps += 1;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Keep the natural step size when the last step was clipped.
                if !last || h * factor > self.h {
                    self.h = (h * factor).min(self.tol.max_step);
                }
            } else {
                self.rejected += 1;
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if self.h < 1e-13 * self.t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t: self.t, step: self.h });
                }
            }
        }
        Ok(())
    }

    fn attempt(&mut self, h: f64) -> f64 {
        let n = self.y.len();
        let y = &self.y;
        let k = &mut self.k;
        let stage = &mut self.stage;
        let rhs = &mut self.rhs;
        let k1 = &self.dy;

        for i in 0..n {
            stage[i] = y[i] + k1[i] * (h * A21);
        }
        rhs(stage, &mut k[1]);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * A31 + k[1][i] * A32) * h;
        }
        rhs(stage, &mut k[2]);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * A41 + k[1][i] * A42 + k[2][i] * A43) * h;
        }
        rhs(stage, &mut k[3]);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * A51 + k[1][i] * A52 + k[2][i] * A53 + k[3][i] * A54) * h;
        }
        rhs(stage, &mut k[4]);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * A61 + k[1][i] * A62 + k[2][i] * A63 + k[3][i] * A64 + k[4][i] * A65) * h;
        }
        rhs(stage, &mut k[5]);
        for i in 0..n {
            self.y_new[i] = y[i] + (k1[i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * h;
        }
        rhs(&self.y_new, &mut self.dy_new);

        let mut acc = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + self.dy_new[i] * E7) * h;
            let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(self.y_new[i].norm());
            acc += (e.norm() / sc).powi(2);
        }
        (acc / n.max(1) as f64).sqrt()
    }
}

fn rms_scaled(v: &[C64], y: &[C64], tol: &AdaptiveTolerances) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter().zip(y).map(|(a, b)| (a.norm() / (tol.atol + tol.rtol * b.norm())).powi(2)).sum::<f64>() / n).sqrt()
}
