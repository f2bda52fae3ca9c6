//! Time-delay-filter input shapers realised as Heaviside staircases.
//!
//! A design with amplitudes `𝒜₀…𝒜_N` and delays `𝒯₁…𝒯_N` turns a command
//! `u` into `(𝒜₀ + Σ 𝒜ᵢ H(t − 𝒯ᵢ)) u` with `H(0) = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShaperKind {
    /// Pass-through, `u(t) = u`.
    Unshaped,
    NonRobust,
    Robust,
    Gsa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperDesign {
    pub kind: ShaperKind,
    pub amplitudes: Vec<f64>,
    pub delays: Vec<f64>,
    pub damping: f64,
    pub design_freq: f64,
}

impl ShaperDesign {
    pub fn unshaped() -> Self {
        Self {
            kind: ShaperKind::Unshaped,
            amplitudes: vec![1.0],
            delays: Vec::new(),
            damping: 0.0,
            design_freq: 0.0,
        }
    }

    /// Number of delayed impulses `N`.
    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    /// Largest delay, or zero for a pass-through.
    pub fn duration(&self) -> f64 {
        self.delays.last().copied().unwrap_or(0.0)
    }

    /// Checks unity gain, non-negativity, strictly increasing positive delays
    /// and the per-kind impulse count.
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != self.delays.len() + 1 {
            return Err(Error::config(format!(
                "{} amplitudes for {} delays",
                self.amplitudes.len(),
                self.delays.len()
            )));
        }
        let expected = match self.kind {
            ShaperKind::Unshaped => Some(0),
            ShaperKind::NonRobust => Some(1),
            ShaperKind::Robust => Some(2),
            ShaperKind::Gsa => None,
        };
        if let Some(n) = expected {
            if self.delays.len() != n {
                return Err(Error::config(format!(
                    "{:?} shaper needs {n} delays, got {}",
                    self.kind,
                    self.delays.len()
                )));
            }
        }
        if let Some(a) = self.amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::config(format!("amplitude {a} is negative or not finite")));
        }
        let sum: f64 = self.amplitudes.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::config(format!("amplitudes sum to {sum}, expected 1")));
        }
        let mut prev = 0.0;
        for &d in &self.delays {
            if !(d.is_finite() && d > prev) {
                return Err(Error::config(format!(
                    "delays must be positive and strictly increasing, got {:?}",
                    self.delays
                )));
            }
            prev = d;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("shaper design serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }
}

fn zero_vibration_pair(damping: f64, design_freq: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::domain(format!("damping ratio {damping} not in [0, 1)")));
    }
    if !(design_freq > 0.0 && design_freq.is_finite()) {
        return Err(Error::domain(format!("design frequency {design_freq} must be positive")));
    }
    let e = (damping * PI / (1.0 - damping * damping).sqrt()).exp();
    let a0 = e / (1.0 + e);
    Ok((a0, 1.0 - a0, PI / design_freq))
}

/// Single-delay shaper cancelling one pole pair at `design_freq`.
pub fn design_nonrobust(damping: f64, design_freq: f64) -> Result<ShaperDesign> {
    let (a0, a1, t) = zero_vibration_pair(damping, design_freq)?;
    Ok(ShaperDesign {
        kind: ShaperKind::NonRobust,
        amplitudes: vec![a0, a1],
        delays: vec![t],
        damping,
        design_freq,
    })
}

/// Square of the non-robust filter: amplitudes `(A₀², 2A₀A₁, A₁²)` at `(T, 2T)`.
pub fn design_robust(damping: f64, design_freq: f64) -> Result<ShaperDesign> {
    let (a0, a1, t) = zero_vibration_pair(damping, design_freq)?;
    Ok(ShaperDesign {
        kind: ShaperKind::Robust,
        amplitudes: vec![a0 * a0, 2.0 * a0 * a1, a1 * a1],
        delays: vec![t, 2.0 * t],
        damping,
        design_freq,
    })
}

/// Staircase level at time `t` for base command `u`.
pub fn shaped_input(design: &ShaperDesign, u: f64, t: f64) -> f64 {
    let mut level = design.amplitudes[0];
    for (a, &d) in design.amplitudes[1..].iter().zip(&design.delays) {
        if t >= d {
            level += a;
        }
    }
    level * u
}

/// Discontinuity times of the staircase.
pub fn switch_times(design: &ShaperDesign) -> Vec<f64> {
    design.delays.clone()
}

/// A shaper applied to a constant base command; this is what the
/// integrators and the per-sample oracle consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedInput {
    pub design: ShaperDesign,
    pub command: f64,
}

impl ShapedInput {
    pub fn new(design: ShaperDesign, command: f64) -> Self {
        Self { design, command }
    }

    pub fn step(command: f64) -> Self {
        Self::new(ShaperDesign::unshaped(), command)
    }

    pub fn level(&self, t: f64) -> f64 {
        shaped_input(&self.design, self.command, t)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        switch_times(&self.design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn nonrobust_examples() {
        let d = design_nonrobust(0.0, PI).unwrap();
        assert_eq!(d.amplitudes, vec![0.5, 0.5]);
        assert_eq!(d.delays, vec![1.0]);
        assert_eq!(design_nonrobust(0.0, 2.0 * PI).unwrap().delays, vec![0.5]);

        let d = design_nonrobust(0.1, PI).unwrap();
        let e = (0.1 * PI / 0.99f64.sqrt()).exp();
        assert_abs_diff_eq!(d.amplitudes[0], e / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(d.amplitudes[0], 0.578_286_182, epsilon = 1e-9);
        assert_abs_diff_eq!(d.delays[0], 1.0, epsilon = 0.0);
        d.validate().unwrap();
    }

    #[test]
    fn damping_out_of_range() {
        assert!(matches!(design_nonrobust(1.0, PI), Err(Error::Domain(_))));
        assert!(design_robust(-0.1, PI).is_err());
        assert!(design_robust(0.0, 0.0).is_err());
    }

    #[test]
    fn robust_examples() {
        let d = design_robust(0.0, PI).unwrap();
        assert_eq!(d.amplitudes, vec![0.25, 0.5, 0.25]);
        assert_eq!(d.delays, vec![1.0, 2.0]);
        assert_eq!(design_robust(0.0, 2.0 * PI).unwrap().delays, vec![0.5, 1.0]);
        d.validate().unwrap();
    }

    #[test]
    fn staircase_levels() {
        let d = design_robust(0.0, PI).unwrap();
        assert_eq!(shaped_input(&d, 1.0, 0.5), 0.25);
        assert_eq!(shaped_input(&d, 1.0, 1.5), 0.75);
        assert_eq!(shaped_input(&d, 1.0, 1.0), 0.75);
        assert_eq!(shaped_input(&d, 2.0, 5.0), 2.0);
    }

    #[test]
    fn switch_time_examples() {
        assert_eq!(switch_times(&design_nonrobust(0.0, PI).unwrap()), vec![1.0]);
        assert_eq!(switch_times(&design_robust(0.0, PI).unwrap()), vec![1.0, 2.0]);
        assert!(switch_times(&ShaperDesign::unshaped()).is_empty());
    }

    #[test]
    fn validation_failures() {
        let mut d = design_robust(0.0, PI).unwrap();
        d.amplitudes[0] = 0.3;
        assert!(d.validate().is_err());
        let mut d = design_robust(0.0, PI).unwrap();
        d.delays = vec![2.0, 1.0];
        assert!(d.validate().is_err());
        let mut d = design_robust(0.0, PI).unwrap();
        d.kind = ShaperKind::NonRobust;
        assert!(d.validate().is_err());
        let mut d = design_robust(0.0, PI).unwrap();
        d.amplitudes = vec![-0.25, 1.0, 0.25];
        assert!(d.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let d = design_robust(0.0, PI).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["kind"], "robust");
        assert_eq!(v["amplitudes"], serde_json::json!([0.25, 0.5, 0.25]));
        assert_eq!(v["delays"], serde_json::json!([1.0, 2.0]));
        assert_eq!(ShaperDesign::from_json(&d.to_json()).unwrap(), d);
        assert!(ShaperDesign::from_json(r#"{"kind":"robust","amplitudes":[1.0],"delays":[1.0,2.0],"damping":0.0,"design_freq":1.0}"#).is_err());
    }

    /// Discrete self-convolution of an impulse train.
    fn convolve(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &(ta, aa) in a {
            for &(tb, ab) in b {
                let t = ta + tb;
                match out.iter_mut().find(|(tt, _)| (*tt - t).abs() < 1e-12) {
                    Some(slot) => slot.1 += aa * ab,
                    None => out.push((t, aa * ab)),
                }
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out
    }

    fn impulses(d: &ShaperDesign) -> Vec<(f64, f64)> {
        std::iter::once(0.0)
            .chain(d.delays.iter().copied())
            .zip(d.amplitudes.iter().copied())
            .collect()
    }

    proptest! {
        #[test]
        fn robust_is_self_convolution(xi in 0.0f64..0.9, w in 0.1f64..20.0) {
            let nr = impulses(&design_nonrobust(xi, w).unwrap());
            let r = impulses(&design_robust(xi, w).unwrap());
            let c = convolve(&nr, &nr);
            prop_assert_eq!(c.len(), r.len());
            for ((tc, ac), (tr, ar)) in c.iter().zip(&r) {
                prop_assert!((tc - tr).abs() < 1e-12);
                prop_assert!((ac - ar).abs() < 1e-14);
            }
            prop_assert!((r.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn unity_terminal_gain_and_monotone(
            raw in proptest::collection::vec(0.01f64..1.0, 2..6),
            gaps in proptest::collection::vec(0.01f64..2.0, 5),
            u in 0.1f64..5.0,
        ) {
            let total: f64 = raw.iter().sum();
            let amps: Vec<f64> = raw.iter().map(|a| a / total).collect();
            let mut t = 0.0;
            let delays: Vec<f64> = gaps[..amps.len() - 1].iter().map(|g| { t += g; t }).collect();
            let d = ShaperDesign { kind: ShaperKind::Gsa, amplitudes: amps, delays, damping: 0.0, design_freq: 1.0 };
            let last = d.duration();
            prop_assert!((shaped_input(&d, u, last + 1e-9) - u).abs() < 1e-12 * u);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..200 {
                let tt = last * 1.2 * k as f64 / 199.0;
                let v = shaped_input(&d, u, tt);
                prop_assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }
}
