//! Glauber heat-bath dynamics for the Ising model on a ring, run in
//! continuous time by uniformization, with binned Poisson-count
//! observations of a weighted magnetization.
//!
//! Reversibility with respect to the ring Gibbs measure and attractiveness
//! (monotonicity of the heat-bath update in the neighbor configuration) are
//! verified exhaustively at construction — they are what make the shared
//! -event monotone coupling order-preserving.

use crate::filter::ParticleModel;
use crate::measure::MetricSpec;
use crate::rng::Stream;
use crate::{Error, Result};

/// Tolerance for the construction-time detailed-balance identity.
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpinModel {
    l: usize,
    beta: f64,
    delta: f64,
    alphas: Vec<f64>,
    c0: f64,
}

impl SpinModel {
    pub fn new(l: usize, beta: f64, delta: f64, alphas: Vec<f64>, c0: f64) -> Result<Self> {
        if l < 3 {
            return Err(Error::InvalidInput(format!("ring length {l} must be at least 3")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "inverse temperature {beta} must be nonnegative"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!("bin width {delta} must be positive")));
        }
        if alphas.len() != l {
            return Err(Error::Dimension(format!(
                "{} observation weights for {l} sites",
                alphas.len()
            )));
        }
        if let Some(&bad) = alphas.iter().find(|&&a| !(a > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "observation weight {bad} must be strictly positive"
            )));
        }
        let alpha_sum: f64 = alphas.iter().sum();
        if !(c0 > alpha_sum) {
            return Err(Error::InvalidInput(format!(
                "offset c0 = {c0} must exceed the weight sum {alpha_sum} so the rate stays positive"
            )));
        }
        let model = SpinModel { l, beta, delta, alphas, c0 };

        // Flip rates lie in (0, 1]: 1/(1+e^{βΔH}) with finite β.
        for nsum in [-2i32, 0, 2] {
            for s in [-1i32, 1] {
                let c = model.flip_rate(s, nsum);
                if !(c > 0.0 && c <= 1.0) {
                    return Err(Error::Degenerate(format!(
                        "flip rate {c} for spin {s}, neighbor sum {nsum} leaves (0, 1]"
                    )));
                }
            }
        }
        // Detailed balance against the ring Gibbs weights, every local
        // pattern: π(σ)c(σ→σ^i) = π(σ^i)c(σ^i→σ).
        for a in [-1i32, 1] {
            for s in [-1i32, 1] {
                for b in [-1i32, 1] {
                    let dh = 2.0 * s as f64 * (a + b) as f64;
                    let lhs = model.flip_rate(s, a + b);
                    let rhs = (-model.beta * dh).exp() * model.flip_rate(-s, a + b);
                    if (lhs - rhs).abs() > DETAILED_BALANCE_TOL {
                        return Err(Error::Degenerate(format!(
                            "detailed balance fails on pattern ({a},{s},{b}): {lhs} vs {rhs}"
                        )));
                    }
                }
            }
        }
        // Attractiveness: the heat-bath plus-probability is monotone in the
        // neighbor pair, checked on all ordered pairs of patterns.
        let pats = [(-1i32, -1i32), (-1, 1), (1, -1), (1, 1)];
        for &(a, b) in &pats {
            for &(a2, b2) in &pats {
                if a <= a2 && b <= b2 {
                    let p1 = model.plus_probability(a + b);
                    let p2 = model.plus_probability(a2 + b2);
                    if p1 > p2 + DETAILED_BALANCE_TOL {
                        return Err(Error::Degenerate(format!(
                            "attractiveness fails: p+({a},{b}) = {p1} > p+({a2},{b2}) = {p2}"
                        )));
                    }
                }
            }
        }
        Ok(model)
    }

    /// Defaults: ring of 32 sites at β = 0.4, bin width 0.5, geometrically
    /// decaying observation weights centered at site 0.
    pub fn default_desk() -> Self {
        SpinModel::desk_ring(32, 0.4).unwrap()
    }

    /// The default-desk construction at any ring size and inverse
    /// temperature: bin width 0.5, observation weights 0.05·0.8^min(i, L−i).
    pub fn desk_ring(l: usize, beta: f64) -> Result<Self> {
        let alphas: Vec<f64> =
            (0..l).map(|i| 0.05 * 0.8f64.powi(i.min(l - i) as i32)).collect();
        SpinModel::new(l, beta, 0.5, alphas, 1.0)
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Glauber flip rate for a spin `s` whose neighbors sum to `nsum`:
    /// 1/(1 + e^{βΔH}) with ΔH = 2s·nsum.
    pub fn flip_rate(&self, s: i32, nsum: i32) -> f64 {
        1.0 / (1.0 + (self.beta * 2.0 * s as f64 * nsum as f64).exp())
    }

    /// Heat-bath probability of landing on +1 given the neighbor sum: the
    /// Gibbs conditional 1/(1 + e^{−2β·nsum}).
    pub fn plus_probability(&self, nsum: i32) -> f64 {
        1.0 / (1.0 + (-2.0 * self.beta * nsum as f64).exp())
    }

    /// Weighted magnetization observation rate h(σ) = c₀ + Σ αᵢσᵢ > 0.
    pub fn obs_rate(&self, config: &[i8]) -> f64 {
        self.c0
            + self
                .alphas
                .iter()
                .zip(config)
                .map(|(&a, &s)| a * s as f64)
                .sum::<f64>()
    }

    /// Squared Hellinger gap between the Poisson observation laws at two
    /// configurations: 2 − 2·exp(−(√λ − √λ′)²/2).
    pub fn hellinger_gap(&self, a: &[i8], b: &[i8]) -> f64 {
        let la = self.delta * self.obs_rate(a);
        let lb = self.delta * self.obs_rate(b);
        let g = la.sqrt() - lb.sqrt();
        2.0 - 2.0 * (-g * g / 2.0).exp()
    }

    /// Weighted Hamming distance with weights 2αᵢ — the metric h is
    /// 1-Lipschitz against.
    pub fn hamming_distance(&self, a: &[i8], b: &[i8]) -> f64 {
        self.alphas
            .iter()
            .zip(a.iter().zip(b))
            .map(|(&al, (&x, &y))| if x != y { 2.0 * al } else { 0.0 })
            .sum()
    }

    pub fn check_config(&self, config: &[i8]) -> Result<()> {
        if config.len() != self.l {
            return Err(Error::Dimension(format!(
                "configuration has {} sites, ring has {}",
                config.len(),
                self.l
            )));
        }
        if config.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput("spins must be ±1".into()));
        }
        Ok(())
    }

    fn neighbor_sum(&self, config: &[i8], i: usize) -> i32 {
        let left = config[(i + self.l - 1) % self.l] as i32;
        let right = config[(i + 1) % self.l] as i32;
        left + right
    }
}

/// Advance one bin of length δ by uniformized events: candidates at total
/// rate L (unit rate per site), each resampling its site from the heat-bath
/// conditional via a shared uniform. Returns per-site flip counts.
pub fn spin_step_counting(
    model: &SpinModel,
    config: &mut Vec<i8>,
    stream: &mut Stream,
) -> Result<Vec<u32>> {
    model.check_config(config)?;
    let mut flips = vec![0u32; model.len()];
    let n_events = stream.poisson(model.len() as f64 * model.delta());
    for _ in 0..n_events {
        let i = stream.pick(model.len());
        let u = stream.uniform();
        let p_plus = model.plus_probability(model.neighbor_sum(config, i));
        let new_spin: i8 = if u < p_plus { 1 } else { -1 };
        if new_spin != config[i] {
            flips[i] += 1;
            config[i] = new_spin;
        }
    }
    Ok(flips)
}

/// Advance one bin of length δ; see [`spin_step_counting`].
pub fn spin_step(model: &SpinModel, config: &mut Vec<i8>, stream: &mut Stream) -> Result<()> {
    spin_step_counting(model, config, stream).map(|_| ())
}

/// Advance two configurations one bin under SHARED events (same sites, same
/// uniforms). Attractiveness makes this order-preserving: if a ≤ b
/// componentwise before the step, it stays so after. Returns the number of
/// events processed.
pub fn spin_step_pair(
    model: &SpinModel,
    a: &mut Vec<i8>,
    b: &mut Vec<i8>,
    stream: &mut Stream,
) -> Result<u64> {
    model.check_config(a)?;
    model.check_config(b)?;
    let n_events = stream.poisson(model.len() as f64 * model.delta());
    for _ in 0..n_events {
        let i = stream.pick(model.len());
        let u = stream.uniform();
        let pa = model.plus_probability(model.neighbor_sum(a, i));
        let pb = model.plus_probability(model.neighbor_sum(b, i));
        a[i] = if u < pa { 1 } else { -1 };
        b[i] = if u < pb { 1 } else { -1 };
    }
    Ok(n_events)
}

/// Poisson-count observation of one bin: Y ~ Poisson(δ·h(σ)).
pub fn spin_observe(model: &SpinModel, config: &[i8], stream: &mut Stream) -> Result<u64> {
    model.check_config(config)?;
    Ok(stream.poisson(model.delta() * model.obs_rate(config)))
}

/// Log-pmf of the Poisson(δ·h(σ)) observation.
pub fn spin_obs_log_pmf(model: &SpinModel, config: &[i8], count: u64) -> f64 {
    let lam = model.delta() * model.obs_rate(config);
    let mut ln_fact = 0.0;
    for k in 1..=count {
        ln_fact += (k as f64).ln();
    }
    count as f64 * lam.ln() - lam - ln_fact
}

fn to_spins(state: &[f64]) -> Vec<i8> {
    state.iter().map(|&v| if v > 0.0 { 1i8 } else { -1i8 }).collect()
}

impl ParticleModel for SpinModel {
    fn state_dim(&self) -> usize {
        self.l
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn step_state(&self, state: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        let mut config = to_spins(state);
        spin_step(self, &mut config, stream)?;
        *state = config.iter().map(|&s| s as f64).collect();
        Ok(())
    }

    fn observe(&self, state: &[f64], stream: &mut Stream) -> Vec<f64> {
        let config = to_spins(state);
        vec![stream.poisson(self.delta() * self.obs_rate(&config)) as f64]
    }

    fn obs_log_density(&self, state: &[f64], y: &[f64]) -> f64 {
        spin_obs_log_pmf(self, &to_spins(state), y[0].round() as u64)
    }

    fn metric(&self) -> MetricSpec {
        MetricSpec::WeightedHamming {
            alphas: self.alphas.iter().map(|a| 2.0 * a).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates_parameters() {
        assert!(SpinModel::new(2, 0.4, 0.5, vec![0.1, 0.1], 1.0).is_err());
        assert!(SpinModel::new(4, -0.1, 0.5, vec![0.1; 4], 1.0).is_err());
        assert!(SpinModel::new(4, 0.4, 0.5, vec![0.1; 3], 1.0).is_err());
        assert!(SpinModel::new(4, 0.4, 0.5, vec![0.0, 0.1, 0.1, 0.1], 1.0).is_err());
        // c0 not exceeding Σα → rate could vanish.
        assert!(SpinModel::new(4, 0.4, 0.5, vec![0.3; 4], 1.0).is_err());
        assert!(SpinModel::new(4, 0.4, 0.5, vec![0.1; 4], 1.0).is_ok());
        let _ = SpinModel::default_desk();
    }

    #[test]
    fn flip_rates_and_plus_probabilities_are_consistent() {
        let model = SpinModel::default_desk();
        // Flipping from s happens exactly when the resample lands on −s.
        for s in [-1i32, 1] {
            for nsum in [-2i32, 0, 2] {
                let resample_opposite = if s == 1 {
                    1.0 - model.plus_probability(nsum)
                } else {
                    model.plus_probability(nsum)
                };
                assert!(
                    (model.flip_rate(s, nsum) - resample_opposite).abs() < 1e-15,
                    "s = {s}, nsum = {nsum}"
                );
            }
        }
    }

    #[test]
    fn beta_zero_flip_counts_are_poisson_half_delta() {
        let model = SpinModel::new(16, 0.0, 0.5, vec![0.01; 16], 0.5).unwrap();
        let mut stream = Stream::new(21, 0, "spin");
        let replicas = 4000;
        let mut total = 0.0;
        let mut total_sq = 0.0;
        let mut n_counts = 0.0;
        for _ in 0..replicas {
            let mut config = vec![1i8; 16];
            let flips = spin_step_counting(&model, &mut config, &mut stream).unwrap();
            for &f in &flips {
                total += f as f64;
                total_sq += (f as f64) * (f as f64);
                n_counts += 1.0;
            }
        }
        let lam = model.delta() / 2.0;
        let mean = total / n_counts;
        let se_mean = (lam / n_counts).sqrt();
        assert!(
            (mean - lam).abs() < 3.0 * se_mean,
            "flip-count mean {mean} vs Poisson(δ/2) = {lam}"
        );
        // Poisson variance equals its mean; se of the sample variance is
        // roughly √((λ + 2λ²)/n).
        let var = total_sq / n_counts - mean * mean;
        let se_var = ((lam + 2.0 * lam * lam) / n_counts).sqrt();
        assert!(
            (var - lam).abs() < 3.0 * se_var,
            "flip-count variance {var} vs {lam}"
        );
    }

    #[test]
    fn long_run_conditionals_match_gibbs_at_positive_beta() {
        let model = SpinModel::new(
            16,
            0.4,
            0.5,
            vec![0.01; 16],
            0.5,
        )
        .unwrap();
        let mut stream = Stream::new(5, 0, "spin-gibbs");
        let mut config = vec![1i8; 16];
        // Burn in.
        for _ in 0..500 {
            spin_step(&model, &mut config, &mut stream).unwrap();
        }
        let n_batches = 50;
        let batch = 400;
        // For each neighbor-sum class, batch frequencies of σ_i = +1.
        let mut batch_freq = vec![Vec::new(); 3]; // classes −2, 0, +2
        for _ in 0..n_batches {
            let mut plus = [0.0f64; 3];
            let mut tot = [0.0f64; 3];
            for _ in 0..batch {
                spin_step(&model, &mut config, &mut stream).unwrap();
                for i in 0..model.len() {
                    let class = (model.neighbor_sum(&config, i) / 2 + 1) as usize;
                    tot[class] += 1.0;
                    if config[i] == 1 {
                        plus[class] += 1.0;
                    }
                }
            }
            for c in 0..3 {
                if tot[c] > 0.0 {
                    batch_freq[c].push(plus[c] / tot[c]);
                }
            }
        }
        for (c, nsum) in [(0usize, -2i32), (1, 0), (2, 2)] {
            let means = &batch_freq[c];
            let nb = means.len() as f64;
            assert!(nb > 10.0, "class {nsum} was rarely visited");
            let grand: f64 = means.iter().sum::<f64>() / nb;
            let var: f64 =
                means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (nb - 1.0);
            let se = (var / nb).sqrt();
            let expect = model.plus_probability(nsum);
            assert!(
                (grand - expect).abs() < 3.0 * se.max(1e-3),
                "neighbor sum {nsum}: {grand} vs Gibbs {expect} (se {se})"
            );
        }
    }

    #[test]
    fn shared_events_preserve_componentwise_order() {
        let model = SpinModel::default_desk();
        let mut stream = Stream::new(3, 0, "spin-pair");
        let mut lo = vec![-1i8; model.len()];
        let mut hi = vec![1i8; model.len()];
        let mut events = 0u64;
        let mut steps = 0u64;
        while events < 100_000 {
            events += spin_step_pair(&model, &mut lo, &mut hi, &mut stream).unwrap();
            steps += 1;
            for (a, b) in lo.iter().zip(&hi) {
                assert!(a <= b, "order violated after {events} events ({steps} steps)");
            }
        }
    }

    #[test]
    fn observation_rate_is_lipschitz_one_for_weighted_hamming() {
        // Exhaustive over all configuration pairs on a small ring.
        let l = 8;
        let alphas: Vec<f64> = (0..l).map(|i| 0.03 + 0.01 * i as f64).collect();
        let model = SpinModel::new(l, 0.4, 0.5, alphas, 1.0).unwrap();
        let to_config = |bits: u32| -> Vec<i8> {
            (0..l).map(|i| if bits >> i & 1 == 1 { 1i8 } else { -1 }).collect()
        };
        for xa in 0..(1u32 << l) {
            let ca = to_config(xa);
            let ha = model.obs_rate(&ca);
            for xb in 0..(1u32 << l) {
                let cb = to_config(xb);
                let gap = (ha - model.obs_rate(&cb)).abs();
                let d = model.hamming_distance(&ca, &cb);
                assert!(gap <= d + 1e-12, "pair ({xa:#b}, {xb:#b}): |Δh| = {gap} > d = {d}");
            }
        }
    }

    #[test]
    fn observation_log_pmf_matches_poisson() {
        let model = SpinModel::default_desk();
        let config = vec![1i8; model.len()];
        let lam = model.delta() * model.obs_rate(&config);
        for k in [0u64, 1, 2, 5] {
            let mut ln_fact = 0.0;
            for j in 1..=k {
                ln_fact += (j as f64).ln();
            }
            let expect = k as f64 * lam.ln() - lam - ln_fact;
            assert!((spin_obs_log_pmf(&model, &config, k) - expect).abs() < 1e-12);
        }
        // Mean of counts over replicas ≈ δ·h(σ).
        let mut stream = Stream::new(9, 0, "spin-obs");
        let replicas = 20_000;
        let mut total = 0.0;
        for _ in 0..replicas {
            total += spin_observe(&model, &config, &mut stream).unwrap() as f64;
        }
        let mean = total / replicas as f64;
        let se = (lam / replicas as f64).sqrt();
        assert!((mean - lam).abs() < 3.0 * se, "count mean {mean} vs {lam}");
    }

    #[test]
    fn hellinger_gap_and_metric_basics() {
        let model = SpinModel::default_desk();
        let a = vec![1i8; model.len()];
        let mut b = a.clone();
        assert_eq!(model.hellinger_gap(&a, &b), 0.0);
        b[0] = -1;
        b[5] = -1;
        let gap = model.hellinger_gap(&a, &b);
        assert!(gap > 0.0 && gap < 2.0);
        assert!((gap - model.hellinger_gap(&b, &a)).abs() < 1e-15);
        assert!(model.hamming_distance(&a, &b) > 0.0);
    }

    #[test]
    fn step_determinism() {
        let model = SpinModel::default_desk();
        let mut s1 = Stream::new(8, 2, "spin");
        let mut s2 = Stream::new(8, 2, "spin");
        let mut c1 = vec![1i8; model.len()];
        let mut c2 = vec![1i8; model.len()];
        for _ in 0..10 {
            spin_step(&model, &mut c1, &mut s1).unwrap();
            spin_step(&model, &mut c2, &mut s2).unwrap();
        }
        assert_eq!(c1, c2);
    }
}
