//! Forward-diffusion noise schedule and the distorted contrastive image.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    DdpmLinear,
}

/// A linear-β DDPM schedule. `mu_at(t)` is the cumulative product `Π(1 − β_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    #[serde(default)]
    pub kind: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    pub total_steps: u32,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::DdpmLinear,
            beta_start: 1e-4,
            beta_end: 0.02,
            total_steps: 1000,
        }
    }
}

impl NoiseSchedule {
    pub fn new(beta_start: f64, beta_end: f64, total_steps: u32) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::DdpmLinear,
            beta_start,
            beta_end,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(Error::validation(format!(
                "schedule requires 0 < beta_start <= beta_end < 1, got ({}, {})",
                self.beta_start, self.beta_end
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::validation("schedule requires total_steps >= 1"));
        }
        Ok(())
    }

    /// β at step `t` (1-based).
    fn beta(&self, t: u32) -> f64 {
        if self.total_steps == 1 {
            return self.beta_start;
        }
        let frac = f64::from(t - 1) / f64::from(self.total_steps - 1);
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }

    pub fn mu_at(&self, timestep: u32) -> Result<f64> {
        self.validate()?;
        if timestep > self.total_steps {
            return Err(Error::validation(format!(
                "timestep {timestep} outside [0, {}]",
                self.total_steps
            )));
        }
        Ok((1..=timestep).map(|t| 1.0 - self.beta(t)).product())
    }
}

/// `√μ_T·x + √(1−μ_T)·z` before clamping, `z` i.i.d. standard normal.
pub fn distort_unclamped(x: &ImageTensor, timestep: u32, schedule: &NoiseSchedule, seed: u64) -> Result<Vec<f64>> {
    let mu = schedule.mu_at(timestep)?;
    if timestep == 0 {
        return Ok(x.data().to_vec());
    }
    let (signal, noise) = (mu.sqrt(), (1.0 - mu).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(x.data()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            signal * v + noise * z
        })
        .collect())
}

/// Diffuses `x` to timestep `timestep` and clamps back into `[0, 1]`.
pub fn distort(x: &ImageTensor, timestep: u32, schedule: &NoiseSchedule, seed: u64) -> Result<ImageTensor> {
    let raw = distort_unclamped(x, timestep, schedule, seed)?;
    ImageTensor::from_clamped(x.height(), x.width(), raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent product loop: rebuild every β explicitly.
    fn mu_oracle(beta_start: f64, beta_end: f64, steps: u32, t: u32) -> f64 {
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * f64::from(i) / f64::from(steps - 1))
            .collect();
        let mut acc = 1.0;
        for b in &betas[..t as usize] {
            acc *= 1.0 - b;
        }
        acc
    }

    #[test]
    fn mu_edges() {
        let s = NoiseSchedule::default();
        assert_eq!(s.mu_at(0).unwrap(), 1.0);
        assert_eq!(s.mu_at(1).unwrap(), 1.0 - 1e-4);
        assert!(s.mu_at(1001).is_err());
    }

    #[test]
    fn mu_matches_product_oracle() {
        let s = NoiseSchedule::default();
        for t in [2, 10, 100, 500, 1000] {
            let got = s.mu_at(t).unwrap();
            let want = mu_oracle(1e-4, 0.02, 1000, t);
            assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "t={t}: {got} vs {want}");
        }
        // frozen from the oracle loop
        let frozen = 0.078_587_242_881_778_24;
        assert!((s.mu_at(500).unwrap() - frozen).abs() < 1e-8);
    }

    #[test]
    fn mu_strictly_decreasing() {
        let s = NoiseSchedule::new(1e-4, 0.02, 200).unwrap();
        let mus: Vec<f64> = (0..=200).map(|t| s.mu_at(t).unwrap()).collect();
        assert!(mus.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(NoiseSchedule::new(0.0, 0.02, 10).is_err());
        assert!(NoiseSchedule::new(0.03, 0.02, 10).is_err());
        assert!(NoiseSchedule::new(1e-4, 1.0, 10).is_err());
        assert!(NoiseSchedule::new(1e-4, 0.02, 0).is_err());
        assert_eq!(NoiseSchedule::new(0.01, 0.01, 1).unwrap().mu_at(1).unwrap(), 0.99);
    }

    #[test]
    fn distort_identity_at_zero_and_deterministic() {
        let x = ImageTensor::new(2, 2, (0..12).map(|i| f64::from(i) / 11.0).collect()).unwrap();
        let s = NoiseSchedule::default();
        assert_eq!(distort(&x, 0, &s, 5).unwrap(), x);
        let a = distort(&x, 300, &s, 5).unwrap();
        let b = distort(&x, 300, &s, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, distort(&x, 300, &s, 6).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn distort_moments_at_final_step() {
        let s = NoiseSchedule::default();
        let t = s.total_steps;
        let mu = s.mu_at(t).unwrap();
        let x = ImageTensor::filled(200, 200, 0.5).unwrap(); // 120k elements
        let raw = distort_unclamped(&x, t, &s, 42).unwrap();
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_mean = mu.sqrt() * 0.5;
        let std_err = ((1.0 - mu) / n).sqrt();
        assert!(
            (mean - expected_mean).abs() <= 3.0 * std_err,
            "mean {mean} vs {expected_mean}"
        );
        assert!((var - (1.0 - mu)).abs() <= 0.05 * (1.0 - mu), "var {var}");
    }
}
