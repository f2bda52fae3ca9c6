//! Embedded Dormand–Prince 5(4) integrator with PI step-size control.
//!
//! The integrator is only ever run across an interval on which the right-hand
//! side is smooth; callers split at input discontinuities. Dense output is by
//! cubic Hermite interpolation between accepted steps.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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

// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 50_000_000,
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self::with_tol(1e-12)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl std::ops::AddAssign for StepStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
    }
}

/// Reusable stage storage for one state dimension.
pub struct Dopri5 {
    n: usize,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// Advances `y` from `t0` to `t1` in place.
    ///
    /// `samples` must be sorted; every sample in `[t0, t1]` is reported to
    /// `sink` exactly once, in order. The controller starts fresh on every
    /// call.
    pub fn integrate<F, S>(
        &mut self,
        mut rhs: F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        opts: &OdeOptions,
        samples: &[f64],
        mut sink: S,
    ) -> Result<StepStats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        S: FnMut(f64, &[f64]),
    {
        assert_eq!(y.len(), self.n, "state dimension mismatch");
        assert!(t1 > t0, "integration interval must be non-empty");
        let n = self.n;
        let mut stats = StepStats::default();
        let mut next_sample = samples.partition_point(|&s| s < t0);

        let mut t = t0;
        rhs(t, y, &mut self.k[0]);
        stats.rhs_evals += 1;
        while next_sample < samples.len() && samples[next_sample] <= t0 {
            sink(samples[next_sample], y);
            next_sample += 1;
        }

        let mut h = self.initial_step(&mut rhs, t0, t1, y, opts);
        stats.rhs_evals += 1;
        let mut facold: f64 = 1e-4;
        let mut last_rejected = false;
        let mut interp = vec![0.0; n];

        loop {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let remaining = t1 - t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }

            self.stages(&mut rhs, t, h, y);
            stats.rhs_evals += 6;

            let mut acc = 0.0;
            for i in 0..n {
                let sc = opts.atol + opts.rtol * y[i].abs().max(self.ynew[i].abs());
                let e = self.err[i] / sc;
                acc += e * e;
            }
            let err = (acc / n as f64).sqrt();

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let t_new = if last { t1 } else { t + h };
                // Dense output for samples inside (t, t_new].
                while next_sample < samples.len() && samples[next_sample] <= t_new {
                    let ts = samples[next_sample];
                    let theta = ((ts - t) / h).clamp(0.0, 1.0);
                    hermite(theta, h, y, &self.k[0], &self.ynew, &self.k[6], &mut interp);
                    sink(ts, &interp);
                    next_sample += 1;
                }
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                t = t_new;
                stats.accepted += 1;
                if last {
                    break;
                }
                let mut fac = fac11 / facold.powf(BETA);
                fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFETY));
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                facold = err.max(1e-4);
                last_rejected = false;
                h = h_new;
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h /= (1.0 / FAC_MIN).min(fac11 / SAFETY);
            }
        }
        Ok(stats)
    }

    fn stages<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &[f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.n;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, ytmp, k6);
        let ynew = &mut self.ynew;
        for i in 0..n {
            ynew[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, ynew, k7);
        for i in 0..n {
            self.err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
    }

    /// Starting step from the usual derivative-magnitude heuristic.
    /// Expects `k[0]` to hold `f(t0, y)`.
    fn initial_step<F>(&mut self, rhs: &mut F, t0: f64, t1: f64, y: &[f64], opts: &OdeOptions) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.n;
        let span = t1 - t0;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = opts.atol + opts.rtol * y[i].abs();
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(span);
        for i in 0..n {
            self.ytmp[i] = y[i] + h * self.k[0][i];
        }
        rhs(t0 + h, &self.ytmp, &mut self.k[1]);
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = opts.atol + opts.rtol * y[i].abs();
            der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = (der2 / n as f64).sqrt() / h;
        let der12 = der2.max((dnf / n as f64).sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(span)
    }
}

#[inline]
fn hermite(theta: f64, h: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], out: &mut [f64]) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oscillator(w: f64) -> impl FnMut(f64, &[f64], &mut [f64]) {
        move |_t, y, dy| {
            dy[0] = y[1];
            dy[1] = -w * w * y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let w = 2.3;
        let mut y = vec![1.0, 0.0];
        let mut solver = Dopri5::new(2);
        let opts = OdeOptions::with_tol(1e-12);
        let samples: Vec<f64> = (0..=50).map(|k| k as f64 * 0.2).collect();
        let mut seen = Vec::new();
        solver
            .integrate(oscillator(w), 0.0, 10.0, &mut y, &opts, &samples, |t, s| {
                seen.push((t, s[0], s[1]));
            })
            .unwrap();
        assert_abs_diff_eq!(y[0], (w * 10.0).cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(y[1], -w * (w * 10.0).sin(), epsilon = 1e-10);
        assert_eq!(seen.len(), samples.len());
        for (t, x, _) in seen {
            // Hermite interpolation is 4th order; looser than the step error.
            assert_abs_diff_eq!(x, (w * t).cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn exponential_decay() {
        let mut y = vec![1.0];
        let mut solver = Dopri5::new(1);
        let stats = solver
            .integrate(
                |_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0],
                0.0,
                5.0,
                &mut y,
                &OdeOptions::with_tol(1e-10),
                &[],
                |_, _| {},
            )
            .unwrap();
        assert_abs_diff_eq!(y[0], (-5.0f64).exp(), epsilon = 1e-10);
        assert!(stats.accepted > 5);
    }

    #[test]
    fn step_budget_exhaustion_reports_time() {
        let mut y = vec![1.0, 0.0];
        let mut solver = Dopri5::new(2);
        let opts = OdeOptions {
            max_steps: 3,
            ..OdeOptions::with_tol(1e-12)
        };
        let err = solver
            .integrate(oscillator(5.0), 0.0, 100.0, &mut y, &opts, &[], |_, _| {})
            .unwrap_err();
        match err {
            Error::Integration { time, .. } => assert!(time > 0.0 && time < 100.0),
            e => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn blow_up_underflows() {
        // y' = y², y(0) = 1 has a pole at t = 1.
        let mut y = vec![1.0];
        let mut solver = Dopri5::new(1);
        let err = solver
            .integrate(
                |_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
                0.0,
                2.0,
                &mut y,
                &OdeOptions::with_tol(1e-10),
                &[],
                |_, _| {},
            )
            .unwrap_err();
        assert!(matches!(err, Error::Integration { time, .. } if time > 0.9 && time <= 1.0));
    }
}
