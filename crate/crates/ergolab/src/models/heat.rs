//! Linear stochastic heat equation on the unit interval, truncated to its
//! first K sine modes. Each mode is an independent Ornstein–Uhlenbeck
//! process, so the sampled chain has an exact Gaussian transition — no time
//! discretization anywhere.

use crate::filter::ParticleModel;
use crate::measure::MetricSpec;
use crate::rng::Stream;
use crate::{Error, Result};

use std::f64::consts::PI;

/// Spectral heat model: mode k decays at rate π²k² and is forced at
/// amplitude σ_k; observations are noisy point evaluations of the field.
#[derive(Debug, Clone)]
pub struct HeatModel {
    k_modes: usize,
    sigmas: Vec<f64>,
    delta: f64,
    obs_points: Vec<f64>,
    obs_var: f64,
    /// Per-mode decay e^{−π²k²δ} over one sampling interval.
    decay: Vec<f64>,
    /// Exact transition noise std per mode.
    step_std: Vec<f64>,
    /// obs_mat[i][k] = √2·sin(πk z_i).
    obs_mat: Vec<Vec<f64>>,
}

impl HeatModel {
    pub fn new(
        sigmas: Vec<f64>,
        delta: f64,
        obs_points: Vec<f64>,
        obs_var: f64,
    ) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidInput("need at least one mode".into()));
        }
        if let Some(&bad) = sigmas.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("mode amplitude {bad} must be positive")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("sampling interval {delta} must be positive")));
        }
        if obs_points.is_empty() {
            return Err(Error::InvalidInput("need at least one observation point".into()));
        }
        if let Some(&bad) = obs_points.iter().find(|&&z| !(z > 0.0 && z < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "observation point {bad} outside the open interval (0, 1)"
            )));
        }
        if !(obs_var > 0.0) || !obs_var.is_finite() {
            return Err(Error::InvalidInput(format!(
                "observation variance {obs_var} must be positive"
            )));
        }
        let k_modes = sigmas.len();
        let decay: Vec<f64> =
            (1..=k_modes).map(|k| (-PI * PI * (k * k) as f64 * delta).exp()).collect();
        let step_std: Vec<f64> = (1..=k_modes)
            .map(|k| {
                let rate = 2.0 * PI * PI * (k * k) as f64;
                (sigmas[k - 1] * sigmas[k - 1] * (1.0 - (-rate * delta).exp()) / rate).sqrt()
            })
            .collect();
        let obs_mat: Vec<Vec<f64>> = obs_points
            .iter()
            .map(|&z| {
                (1..=k_modes).map(|k| std::f64::consts::SQRT_2 * (PI * k as f64 * z).sin()).collect()
            })
            .collect();
        Ok(HeatModel { k_modes, sigmas, delta, obs_points, obs_var, decay, step_std, obs_mat })
    }

    /// Desk-scale defaults: 8 modes with σ_k = 1/k, sampling interval 0.1,
    /// three observation points, observation noise variance 0.04.
    pub fn default_desk() -> Self {
        let sigmas: Vec<f64> = (1..=8).map(|k| 1.0 / k as f64).collect();
        HeatModel::new(sigmas, 0.1, vec![0.2, 0.5, 0.8], 0.04).unwrap()
    }

    pub fn k_modes(&self) -> usize {
        self.k_modes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    pub fn n_obs(&self) -> usize {
        self.obs_points.len()
    }

    /// Stationary standard deviation of mode k (1-based): σ_k/√(2π²k²).
    pub fn stationary_std(&self, k: usize) -> f64 {
        self.sigmas[k - 1] / (2.0 * PI * PI * (k * k) as f64).sqrt()
    }

    /// Per-mode decay factor over one sampling interval.
    pub fn mode_decay(&self, k: usize) -> f64 {
        self.decay[k - 1]
    }

    /// Mean observation vector (no noise): field values at the points.
    pub fn observe_mean(&self, x: &[f64]) -> Vec<f64> {
        self.obs_mat
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Draw a stationary state.
    pub fn sample_stationary(&self, stream: &mut Stream) -> Vec<f64> {
        (1..=self.k_modes).map(|k| self.stationary_std(k) * stream.normal()).collect()
    }

    /// Squared Hellinger gap between the observation laws at two states:
    /// Gaussian closed form 2 − 2·exp(−‖Δmean‖²/(8r)).
    pub fn hellinger_gap(&self, x: &[f64], xb: &[f64]) -> f64 {
        let ma = self.observe_mean(x);
        let mb = self.observe_mean(xb);
        let q: f64 = ma.iter().zip(&mb).map(|(a, b)| (a - b) * (a - b)).sum();
        2.0 - 2.0 * (-q / (8.0 * self.obs_var)).exp()
    }
}

/// Exact Ornstein–Uhlenbeck transition over one sampling interval:
/// x′_k = e^{−π²k²δ}·x_k + s_k·noise_k.
pub fn heat_step(model: &HeatModel, x: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.k_modes || noise.len() != model.k_modes {
        return Err(Error::Dimension(format!(
            "state and noise must have {} modes, got {} and {}",
            model.k_modes,
            x.len(),
            noise.len()
        )));
    }
    Ok((0..model.k_modes)
        .map(|i| model.decay[i] * x[i] + model.step_std[i] * noise[i])
        .collect())
}

/// Noisy point observations: Y_i = Σ_k x_k·√2·sin(πk z_i) + √r·noise_i.
pub fn heat_observe(model: &HeatModel, x: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.k_modes || noise.len() != model.obs_points.len() {
        return Err(Error::Dimension(format!(
            "state needs {} modes and noise {} points",
            model.k_modes,
            model.obs_points.len()
        )));
    }
    let r_std = model.obs_var.sqrt();
    Ok(model
        .observe_mean(x)
        .iter()
        .zip(noise)
        .map(|(m, n)| m + r_std * n)
        .collect())
}

impl ParticleModel for HeatModel {
    fn state_dim(&self) -> usize {
        self.k_modes
    }

    fn obs_dim(&self) -> usize {
        self.obs_points.len()
    }

    fn step_state(&self, state: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        let noise = stream.normal_vec(self.k_modes);
        *state = heat_step(self, state, &noise)?;
        Ok(())
    }

    fn observe(&self, state: &[f64], stream: &mut Stream) -> Vec<f64> {
        let noise = stream.normal_vec(self.obs_points.len());
        heat_observe(self, state, &noise).expect("dimensions fixed by the model")
    }

    fn obs_log_density(&self, state: &[f64], y: &[f64]) -> f64 {
        let mean = self.observe_mean(state);
        let r = self.obs_var;
        let norm = -0.5 * (2.0 * PI * r).ln() * mean.len() as f64;
        norm - mean.iter().zip(y).map(|(m, v)| (v - m) * (v - m)).sum::<f64>() / (2.0 * r)
    }

    fn metric(&self) -> MetricSpec {
        // First-order Sobolev weights: d(x,x′)² = Σ (1+π²k²)·Δ_k².
        MetricSpec::WeightedSobolev {
            s: 1.0,
            mode_weights: (1..=self.k_modes)
                .map(|k| (1.0 + PI * PI * (k * k) as f64).sqrt())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_pure_exponential_decay() {
        let model = HeatModel::default_desk();
        let x: Vec<f64> = (1..=8).map(|k| 1.0 / k as f64).collect();
        let zero = vec![0.0; 8];
        let next = heat_step(&model, &x, &zero).unwrap();
        for (k, (&a, &b)) in x.iter().zip(&next).enumerate() {
            let expect = a * (-PI * PI * ((k + 1) * (k + 1)) as f64 * model.delta()).exp();
            assert!((b - expect).abs() < 1e-15, "mode {}", k + 1);
        }
    }

    #[test]
    fn two_steps_compose_to_one_double_step_in_law() {
        let model = HeatModel::default_desk();
        let sigmas = model.sigmas().to_vec();
        let double = HeatModel::new(sigmas, 2.0 * model.delta(), vec![0.5], 0.04).unwrap();
        for k in 1..=model.k_modes() {
            // Mean factor multiplies; variances add with the decay weight.
            let d1 = model.mode_decay(k);
            assert!((d1 * d1 - double.mode_decay(k)).abs() < 1e-12, "decay, mode {k}");
            let s1 = model.step_std[k - 1];
            let comp_var = s1 * s1 * (1.0 + d1 * d1);
            let s2 = double.step_std[k - 1];
            assert!((comp_var - s2 * s2).abs() < 1e-12, "variance, mode {k}");
        }
    }

    #[test]
    fn stationary_mode_variances_match_closed_form() {
        let model = HeatModel::default_desk();
        let mut stream = Stream::new(42, 0, "heat-stationary");
        let mut x = model.sample_stationary(&mut stream);
        let n_batches = 60;
        let batch = 400;
        // Second-moment batch means per mode.
        let mut batch_m2 = vec![Vec::with_capacity(n_batches); model.k_modes()];
        for _ in 0..n_batches {
            let mut acc = vec![0.0; model.k_modes()];
            for _ in 0..batch {
                model.step_state(&mut x, &mut stream).unwrap();
                for (a, &v) in acc.iter_mut().zip(&x) {
                    *a += v * v;
                }
            }
            for (k, a) in acc.iter().enumerate() {
                batch_m2[k].push(a / batch as f64);
            }
        }
        for k in 1..=model.k_modes() {
            let means = &batch_m2[k - 1];
            let nb = means.len() as f64;
            let grand: f64 = means.iter().sum::<f64>() / nb;
            let var: f64 =
                means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (nb - 1.0);
            let se = (var / nb).sqrt();
            let expect = model.stationary_std(k).powi(2);
            assert!(
                (grand - expect).abs() < 3.0 * se.max(1e-12),
                "mode {k}: sample m2 {grand} vs {expect} (se {se})"
            );
        }
    }

    #[test]
    fn observation_mean_is_the_sine_sum() {
        let model = HeatModel::new(vec![1.0], 0.1, vec![0.5], 0.01).unwrap();
        // Single mode k=1 observed at z = 0.5: mean = √2·x₁·sin(π/2).
        let y = heat_observe(&model, &[0.7], &[0.0]).unwrap();
        assert!((y[0] - std::f64::consts::SQRT_2 * 0.7).abs() < 1e-15);
        // Zero state → pure noise.
        let y0 = heat_observe(&model, &[0.0], &[1.5]).unwrap();
        assert!((y0[0] - 0.1 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn observation_log_density_matches_gaussian_formula() {
        let model = HeatModel::default_desk();
        let mut stream = Stream::new(3, 0, "heat-obs");
        let x = model.sample_stationary(&mut stream);
        let y = model.observe(&x, &mut stream);
        let mean = model.observe_mean(&x);
        let r = model.obs_var();
        let mut expect = 0.0;
        for (m, v) in mean.iter().zip(&y) {
            expect += -0.5 * (2.0 * PI * r).ln() - (v - m) * (v - m) / (2.0 * r);
        }
        assert!((model.obs_log_density(&x, &y) - expect).abs() < 1e-12);
        assert!(model.obs_log_density(&x, &y).is_finite());
    }

    #[test]
    fn hellinger_gap_basics() {
        let model = HeatModel::default_desk();
        let x: Vec<f64> = vec![0.3; 8];
        assert_eq!(model.hellinger_gap(&x, &x), 0.0);
        let mut xb = x.clone();
        xb[0] += 1.0;
        let gap = model.hellinger_gap(&x, &xb);
        assert!(gap > 0.0 && gap < 2.0);
        assert!((gap - model.hellinger_gap(&xb, &x)).abs() < 1e-15);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(HeatModel::new(vec![], 0.1, vec![0.5], 0.01).is_err());
        assert!(HeatModel::new(vec![0.0], 0.1, vec![0.5], 0.01).is_err());
        assert!(HeatModel::new(vec![1.0], -0.1, vec![0.5], 0.01).is_err());
        assert!(HeatModel::new(vec![1.0], 0.1, vec![1.5], 0.01).is_err());
        assert!(HeatModel::new(vec![1.0], 0.1, vec![0.5], 0.0).is_err());
    }
}
