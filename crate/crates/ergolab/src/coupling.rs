//! Couplings of two trajectories of the same dynamics and the statistics
//! that quantify how fast the legs approach each other.
//!
//! Two constructions are provided: a synchronous coupling (both legs driven
//! by the identical noise) for the continuous-state models, and a monotone
//! coupling (shared event clocks and uniforms) for the spin ring. Both keep
//! each leg exactly distributed as the model law; the first leg even consumes
//! the stream exactly as a lone run would, so it is bitwise reproducible.
//!
//! From a batch of coupled runs, [`alpha_estimate`] reports how often the
//! squared coupling distance has a negligible tail — the empirical surrogate
//! for "the trajectories converge towards each other with probability at
//! least α". Since summability of Σ d̃_n² is undecidable from a finite run,
//! the pre-registered proxy is a tail half-sum test: success iff
//! Σ_{n > T/2} d̃_n² < ε with ε = 1e-6 and T = 400 by default; sensitivity
//! can be probed by doubling T. [`hellinger_lipschitz_check`] verifies that
//! squared Hellinger gaps between observation laws are dominated by
//! C·d̃(x,x′)², the observation-regularity half of the stability argument.

use crate::filter::ParticleModel;
use crate::models::delay::{sdde_step, DelayModel};
use crate::models::heat::{heat_step, HeatModel};
use crate::models::ns::{ns_step, NSModel};
use crate::models::spin::{spin_step_pair, SpinModel};
use crate::rng::Stream;
use crate::{Error, Result};

/// Slack allowed when checking the base distance never exceeds the coupling
/// distance (pure float drift; the domination is exact in the metrics).
pub const PAIR_GAP_TOL: f64 = 1e-12;

/// Default horizon for tail-sum coupling verdicts.
pub const DEFAULT_ALPHA_HORIZON: usize = 400;

/// Default tail-sum threshold: Σ_{n>T/2} d̃_n² below this counts as coupled.
pub const DEFAULT_ALPHA_EPSILON: f64 = 1e-6;

/// Normal quantile for two-sided 95% intervals.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Two coupled trajectories with their per-step distances: `d` in the base
/// metric (the one whose squared sum the theory controls) and `d_tilde` in
/// the coupling metric that also controls observation Hellinger gaps.
/// The base distance never exceeds the coupling distance.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    traj_a: Vec<Vec<f64>>,
    traj_b: Vec<Vec<f64>>,
    d: Vec<f64>,
    d_tilde: Vec<f64>,
    metric_base: String,
    metric_coupling: String,
}

impl CoupledPair {
    pub fn new(
        traj_a: Vec<Vec<f64>>,
        traj_b: Vec<Vec<f64>>,
        d: Vec<f64>,
        d_tilde: Vec<f64>,
        metric_base: impl Into<String>,
        metric_coupling: impl Into<String>,
    ) -> Result<Self> {
        if traj_a.len() != traj_b.len() || traj_a.len() != d.len() || d.len() != d_tilde.len() {
            return Err(Error::Dimension(format!(
                "trajectories and distance series disagree in length: {} / {} / {} / {}",
                traj_a.len(),
                traj_b.len(),
                d.len(),
                d_tilde.len()
            )));
        }
        if d.is_empty() {
            return Err(Error::InvalidInput("empty coupled run".into()));
        }
        for (n, (&dn, &dtn)) in d.iter().zip(&d_tilde).enumerate() {
            if !(dn >= 0.0) || !(dtn >= 0.0) || !dn.is_finite() || !dtn.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "distances at step {n} must be finite and nonnegative, got {dn} and {dtn}"
                )));
            }
            if dn > dtn + PAIR_GAP_TOL {
                return Err(Error::InvalidInput(format!(
                    "base distance {dn} exceeds coupling distance {dtn} at step {n}"
                )));
            }
        }
        Ok(CoupledPair {
            traj_a,
            traj_b,
            d,
            d_tilde,
            metric_base: metric_base.into(),
            metric_coupling: metric_coupling.into(),
        })
    }

    /// Number of recorded time points (horizon + 1; step 0 is the initial pair).
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn state_a(&self, n: usize) -> &[f64] {
        &self.traj_a[n]
    }

    pub fn state_b(&self, n: usize) -> &[f64] {
        &self.traj_b[n]
    }

    pub fn base_distances(&self) -> &[f64] {
        &self.d
    }

    pub fn coupling_distances(&self) -> &[f64] {
        &self.d_tilde
    }

    pub fn metric_labels(&self) -> (&str, &str) {
        (&self.metric_base, &self.metric_coupling)
    }

    /// Tail half-sum Σ_{n > T/2} d̃_n² where T is the final step index.
    pub fn tail_sum(&self) -> f64 {
        let t = self.d_tilde.len() - 1;
        self.d_tilde
            .iter()
            .enumerate()
            .filter(|&(n, _)| 2 * n > t)
            .map(|(_, &v)| v * v)
            .sum()
    }

    /// Number of coordinates on which the legs disagree, per step.
    pub fn disagreement_counts(&self) -> Vec<u64> {
        self.traj_a
            .iter()
            .zip(&self.traj_b)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
            .collect()
    }
}

/// Models whose sampling step factors through an explicit noise draw, so two
/// copies can be advanced by the identical noise. The first leg must consume
/// the stream exactly as `ParticleModel::step_state` does.
pub trait CommonNoise: ParticleModel {
    /// Advance both legs one sampling interval under one shared noise draw.
    fn step_pair(&self, a: &mut Vec<f64>, b: &mut Vec<f64>, stream: &mut Stream) -> Result<()>;

    /// Base metric d (dominated by the coupling metric).
    fn base_distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// Coupling metric d̃ controlling both contraction and observation gaps.
    fn coupling_distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// Human-readable names of (base, coupling) metrics for reports.
    fn metric_names(&self) -> (&'static str, &'static str);
}

impl CommonNoise for HeatModel {
    fn step_pair(&self, a: &mut Vec<f64>, b: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        let noise = stream.normal_vec(self.k_modes());
        *a = heat_step(self, a, &noise)?;
        *b = heat_step(self, b, &noise)?;
        Ok(())
    }

    fn base_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        // The mode basis is orthonormal, so this is the L² field distance.
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    fn coupling_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric()
            .distance(a, b)
            .expect("dimensions fixed by the model")
    }

    fn metric_names(&self) -> (&'static str, &'static str) {
        ("L2", "H1")
    }
}

impl CommonNoise for NSModel {
    fn step_pair(&self, a: &mut Vec<f64>, b: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        for _ in 0..self.steps_per_sample() {
            let noise = stream.normal_vec(self.noise_len());
            ns_step(self, a, &noise)?;
            ns_step(self, b, &noise)?;
        }
        Ok(())
    }

    fn base_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.l2_distance(a, b)
    }

    fn coupling_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h1_distance(a, b)
    }

    fn metric_names(&self) -> (&'static str, &'static str) {
        ("L2", "H1")
    }
}

impl CommonNoise for DelayModel {
    fn step_pair(&self, a: &mut Vec<f64>, b: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        for _ in 0..self.steps_per_sample() {
            let noise = stream.normal();
            sdde_step(self, a, noise)?;
            sdde_step(self, b, noise)?;
        }
        Ok(())
    }

    fn base_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        // Distance of the present values (window endpoints).
        (a.last().unwrap() - b.last().unwrap()).abs()
    }

    fn coupling_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sup_distance(a, b)
    }

    fn metric_names(&self) -> (&'static str, &'static str) {
        ("endpoint", "sup-window")
    }
}

/// Drive two copies of the model with the identical noise stream for `t_len`
/// sampling steps. The first leg consumes the stream exactly as a lone run
/// would, so each leg alone is an exact draw from the model law.
pub fn synchronous_coupling_run(
    model: &dyn CommonNoise,
    x0: &[f64],
    x0b: &[f64],
    t_len: usize,
    seed: u64,
    replica: u64,
) -> Result<CoupledPair> {
    if x0.len() != model.state_dim() || x0b.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial states must have {} coordinates, got {} and {}",
            model.state_dim(),
            x0.len(),
            x0b.len()
        )));
    }
    let mut stream = Stream::new(seed, replica, "coupling");
    let mut a = x0.to_vec();
    let mut b = x0b.to_vec();
    let mut traj_a = Vec::with_capacity(t_len + 1);
    let mut traj_b = Vec::with_capacity(t_len + 1);
    let mut d = Vec::with_capacity(t_len + 1);
    let mut dt = Vec::with_capacity(t_len + 1);
    for n in 0..=t_len {
        if n > 0 {
            model.step_pair(&mut a, &mut b, &mut stream)?;
        }
        traj_a.push(a.clone());
        traj_b.push(b.clone());
        d.push(model.base_distance(&a, &b));
        dt.push(model.coupling_distance(&a, &b));
    }
    let (mb, mc) = model.metric_names();
    CoupledPair::new(traj_a, traj_b, d, dt, mb, mc)
}

/// Couple two ordered spin configurations through shared event clocks and
/// uniforms. Attractiveness of the heat-bath rates makes the order invariant;
/// a violation would be a dynamics bug and trips an assertion. Both distance
/// series carry the weighted Hamming metric.
pub fn monotone_coupling_run(
    model: &SpinModel,
    s0: &[i8],
    s0b: &[i8],
    t_len: usize,
    seed: u64,
    replica: u64,
) -> Result<CoupledPair> {
    model.check_config(s0)?;
    model.check_config(s0b)?;
    if s0.iter().zip(s0b).any(|(x, y)| x > y) {
        return Err(Error::InvalidInput(
            "initial configurations must be componentwise ordered (first ≤ second)".into(),
        ));
    }
    let mut stream = Stream::new(seed, replica, "coupling");
    let mut a = s0.to_vec();
    let mut b = s0b.to_vec();
    let mut traj_a = Vec::with_capacity(t_len + 1);
    let mut traj_b = Vec::with_capacity(t_len + 1);
    let mut d = Vec::with_capacity(t_len + 1);
    for n in 0..=t_len {
        if n > 0 {
            spin_step_pair(model, &mut a, &mut b, &mut stream)?;
        }
        assert!(
            a.iter().zip(&b).all(|(x, y)| x <= y),
            "monotone coupling lost the componentwise order at step {n}"
        );
        traj_a.push(a.iter().map(|&s| s as f64).collect());
        traj_b.push(b.iter().map(|&s| s as f64).collect());
        d.push(model.hamming_distance(&a, &b));
    }
    let dt = d.clone();
    CoupledPair::new(traj_a, traj_b, d, dt, "weighted-hamming", "weighted-hamming")
}

/// Verdict over coupled replicas: `alpha_hat = successes / replicas` is the
/// fraction whose tail half-sum Σ_{n>T/2} d̃_n² stayed below ε, minimized
/// over the supplied initial pairs (the theory needs a bound uniform in the
/// pair; sampled pairs can only lower-bound that, which is reported as is).
#[derive(Debug, Clone)]
pub struct CouplingReport {
    /// Replicas per initial pair.
    pub replicas: usize,
    /// Successes of the worst (minimum-success) pair.
    pub successes: usize,
    /// successes / replicas for the worst pair.
    pub alpha_hat: f64,
    /// Tail half-sums of the worst pair, one per replica.
    pub tail_sums: Vec<f64>,
    /// Wilson 95% interval for the worst pair's success probability.
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Success fraction of every supplied pair, in input order.
    pub per_pair_alpha: Vec<f64>,
}

fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let z = WILSON_Z;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Estimate the coupling probability from repeated coupled runs.
///
/// `coupling(x0, x0b, t_len, replica)` must produce one coupled pair using a
/// stream keyed by `replica`; replica indices are distinct across all
/// (pair, repeat) combinations so runs are independent.
pub fn alpha_estimate<F>(
    mut coupling: F,
    init_pairs: &[(Vec<f64>, Vec<f64>)],
    replicas: usize,
    t_len: usize,
    epsilon: f64,
) -> Result<CouplingReport>
where
    F: FnMut(&[f64], &[f64], usize, u64) -> Result<CoupledPair>,
{
    if init_pairs.is_empty() {
        return Err(Error::InvalidInput("need at least one initial pair".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidInput("need at least one replica".into()));
    }
    if t_len < 2 {
        return Err(Error::InvalidInput(format!(
            "horizon {t_len} leaves no tail to sum"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tail threshold {epsilon} must be positive"
        )));
    }
    let mut worst: Option<(usize, Vec<f64>)> = None;
    let mut per_pair_alpha = Vec::with_capacity(init_pairs.len());
    for (p, (x0, x0b)) in init_pairs.iter().enumerate() {
        let mut successes = 0;
        let mut tails = Vec::with_capacity(replicas);
        for r in 0..replicas {
            let replica = (p * replicas + r) as u64;
            let pair = coupling(x0, x0b, t_len, replica)?;
            let tail = pair.tail_sum();
            if tail < epsilon {
                successes += 1;
            }
            tails.push(tail);
        }
        per_pair_alpha.push(successes as f64 / replicas as f64);
        if worst.as_ref().map_or(true, |(s, _)| successes < *s) {
            worst = Some((successes, tails));
        }
    }
    let (successes, tail_sums) = worst.expect("at least one pair was processed");
    let (wilson_low, wilson_high) = wilson_interval(successes, replicas);
    Ok(CouplingReport {
        replicas,
        successes,
        alpha_hat: successes as f64 / replicas as f64,
        tail_sums,
        wilson_low,
        wilson_high,
        per_pair_alpha,
    })
}

/// [`alpha_estimate`] specialized to the synchronous coupling of one model.
pub fn synchronous_alpha(
    model: &dyn CommonNoise,
    init_pairs: &[(Vec<f64>, Vec<f64>)],
    replicas: usize,
    t_len: usize,
    epsilon: f64,
    seed: u64,
) -> Result<CouplingReport> {
    alpha_estimate(
        |x0, x0b, t, replica| synchronous_coupling_run(model, x0, x0b, t, seed, replica),
        init_pairs,
        replicas,
        t_len,
        epsilon,
    )
}

/// Log-linear decay fit of positive curves, e.g. disagreement counts of
/// monotone coupling replicas: per curve, least squares of ln(value) against
/// time over the longest positive prefix (at least three points), then a
/// 95% t-interval for the mean decay rate across curves.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub gamma_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Curves that had a long enough positive prefix to fit.
    pub n_curves: usize,
}

/// Two-sided 95% Student-t quantile.
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::INFINITY
    } else if df <= TABLE.len() {
        TABLE[df - 1]
    } else {
        WILSON_Z
    }
}

pub fn disagreement_decay_rate(curves: &[Vec<f64>], dt: f64) -> Result<DecayFit> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
    }
    let mut gammas = Vec::new();
    for curve in curves {
        let prefix: Vec<f64> = curve.iter().copied().take_while(|&v| v > 0.0).collect();
        if prefix.len() < 3 {
            continue;
        }
        let n = prefix.len() as f64;
        let mean_t = dt * (prefix.len() - 1) as f64 / 2.0;
        let logs: Vec<f64> = prefix.iter().map(|v| v.ln()).collect();
        let mean_y = logs.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (i, &y) in logs.iter().enumerate() {
            let x = i as f64 * dt - mean_t;
            sxx += x * x;
            sxy += x * (y - mean_y);
        }
        gammas.push(-sxy / sxx);
    }
    if gammas.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than two curves had a positive prefix of length ≥ 3".into(),
        ));
    }
    let n = gammas.len() as f64;
    let mean = gammas.iter().sum::<f64>() / n;
    let var = gammas.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
    let half = t_quantile_975(gammas.len() - 1) * (var / n).sqrt();
    Ok(DecayFit {
        gamma_hat: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        n_curves: gammas.len(),
    })
}

/// Result of a Hellinger-Lipschitz scan: `c_hat` is the estimated Lipschitz
/// constant, equal to the maximum observed ratio gap/d̃² over the pairs.
#[derive(Debug, Clone)]
pub struct HellingerReport {
    pub max_ratio: f64,
    pub c_hat: f64,
    /// Pairs with positive distance that entered the maximum.
    pub n_pairs: usize,
}

/// Scan state pairs for the ratio of squared observation Hellinger gap to
/// squared coupling distance. A finite maximum over a wide sample supports
/// the observation-regularity hypothesis gap ≤ C·d̃²; coincident pairs must
/// have zero gap and are excluded from the ratio.
pub fn hellinger_lipschitz_check<G, D>(
    gap: G,
    dist: D,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<HellingerReport>
where
    G: Fn(&[f64], &[f64]) -> f64,
    D: Fn(&[f64], &[f64]) -> f64,
{
    if pairs.is_empty() {
        return Err(Error::InvalidInput("need at least one state pair".into()));
    }
    let mut max_ratio: f64 = 0.0;
    let mut used = 0;
    for (i, (a, b)) in pairs.iter().enumerate() {
        let g = gap(a, b);
        if !(-1e-12..=2.0 + 1e-12).contains(&g) {
            return Err(Error::InvalidInput(format!(
                "squared Hellinger gap {g} at pair {i} outside [0, 2]"
            )));
        }
        let d = dist(a, b);
        if !(d >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "distance {d} at pair {i} must be nonnegative"
            )));
        }
        if d == 0.0 {
            if g > 1e-12 {
                return Err(Error::Degenerate(format!(
                    "pair {i} has zero distance but Hellinger gap {g}"
                )));
            }
            continue;
        }
        max_ratio = max_ratio.max(g.max(0.0) / (d * d));
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "all pairs were coincident; no ratio to report".into(),
        ));
    }
    Ok(HellingerReport { max_ratio, c_hat: max_ratio, n_pairs: used })
}

/// Two-sample Kolmogorov–Smirnov statistic sup_x |F̂(x) − Ĝ(x)|, used to
/// check that a coupled leg reproduces the single-run law.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput("KS needs nonempty samples".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("samples must not contain NaN"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("samples must not contain NaN"));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        worst = worst.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(worst)
}
