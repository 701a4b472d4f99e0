//! The nonlinear filter: exact Bayes recursion on finite hidden Markov
//! models, a bootstrap particle filter for continuous-state models, a
//! two-filter stability harness, and one step of the filter-and-observation
//! Markov kernel Γ.

use crate::conditional::FiniteHMM;
use crate::linalg::log_sum_exp;
use crate::markov::stationary;
use crate::measure::{
    bl_atomic, subsample_atomic, tv_categorical, AtomicMeasure, Categorical, MetricSpec,
};
use crate::rng::Stream;
use crate::{Error, Result, TV_CAP};

/// Path-enumeration oracle caps: window length and state count.
pub const BRUTE_FORCE_T_CAP: usize = 10;
pub const BRUTE_FORCE_STATE_CAP: usize = 8;

/// A filter's running state: an exact categorical posterior for finite
/// models, or a weighted particle cloud for continuous ones.
#[derive(Debug, Clone)]
pub enum FilterState {
    Exact { dist: Categorical, step: usize },
    Cloud { cloud: AtomicMeasure, step: usize },
}

impl FilterState {
    pub fn step(&self) -> usize {
        match self {
            FilterState::Exact { step, .. } => *step,
            FilterState::Cloud { step, .. } => *step,
        }
    }
}

/// Bootstrap particle filter settings: cloud size, and the effective-sample
/// -size fraction below which the cloud is systematically resampled.
#[derive(Debug, Clone)]
pub struct ParticleConfig {
    pub n_particles: usize,
    pub resample_threshold: f64,
}

impl ParticleConfig {
    pub fn new(n_particles: usize, resample_threshold: f64) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 particles, got {n_particles}"
            )));
        }
        if !(resample_threshold > 0.0 && resample_threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "resample threshold {resample_threshold} outside (0, 1]"
            )));
        }
        Ok(ParticleConfig { n_particles, resample_threshold })
    }
}

impl Default for ParticleConfig {
    fn default() -> Self {
        ParticleConfig { n_particles: 1000, resample_threshold: 0.5 }
    }
}

/// Which distance a stability run records between the two filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Tv,
    Bl,
}

impl DistanceKind {
    pub fn label(&self) -> &'static str {
        match self {
            DistanceKind::Tv => "tv",
            DistanceKind::Bl => "bl",
        }
    }
}

/// One row of a stability curve: step index, distance between the two
/// filters, the distance kind, and a tag naming the family of functions the
/// distance is measured against ("full" state, or a named window).
#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub n: usize,
    pub distance: f64,
    pub kind: DistanceKind,
    pub field: String,
}

/// Per-step distances between two filters run on the same observations.
#[derive(Debug, Clone)]
pub struct StabilityCurve {
    rows: Vec<StabilityRow>,
}

impl StabilityCurve {
    pub fn new(rows: Vec<StabilityRow>) -> Result<Self> {
        for w in rows.windows(2) {
            if w[1].n <= w[0].n {
                return Err(Error::InvalidInput(format!(
                    "stability rows must have strictly increasing steps, got {} then {}",
                    w[0].n, w[1].n
                )));
            }
        }
        if let Some(bad) = rows.iter().find(|r| !(r.distance >= 0.0 && r.distance <= TV_CAP)) {
            return Err(Error::InvalidInput(format!(
                "distance {} at step {} outside [0, {TV_CAP}]",
                bad.distance, bad.n
            )));
        }
        Ok(StabilityCurve { rows })
    }

    pub fn rows(&self) -> &[StabilityRow] {
        &self.rows
    }

    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.distance).collect()
    }
}

/// One exact Bayes update: ν′(x′) ∝ Σ_x ν(x)·P0(x,x′)·g(x,y,x′,y2).
pub fn filter_update_exact(
    hmm: &FiniteHMM,
    nu: &Categorical,
    y: usize,
    y2: usize,
) -> Result<Categorical> {
    let m = hmm.n_hidden();
    if nu.len() != m {
        return Err(Error::Dimension(format!(
            "filter has {} entries for {m} hidden states",
            nu.len()
        )));
    }
    if y >= hmm.n_symbols() || y2 >= hmm.n_symbols() {
        return Err(Error::InvalidInput(format!(
            "observation symbols ({y}, {y2}) must lie below {}",
            hmm.n_symbols()
        )));
    }
    let mut out = vec![0.0; m];
    let mut norm = 0.0;
    for xp in 0..m {
        let mut acc = 0.0;
        for (x, &w) in nu.probs().iter().enumerate() {
            if w > 0.0 {
                acc += w * hmm.p0().get(x, xp) * hmm.g(x, y, xp, y2);
            }
        }
        out[xp] = acc;
        norm += acc;
    }
    if norm <= 0.0 {
        return Err(Error::Degenerate(format!(
            "filter update has zero normalizer on observation pair ({y}, {y2})"
        )));
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    Categorical::new(out)
}

/// State-space model interface for the bootstrap particle filter: a
/// transition sampler, an observation sampler, a positive observation
/// log-density, and the metric its particle clouds are compared under.
pub trait ParticleModel {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// One transition step, in place.
    fn step_state(&self, state: &mut Vec<f64>, stream: &mut Stream) -> Result<()>;
    /// Sample an observation of the current state.
    fn observe(&self, state: &[f64], stream: &mut Stream) -> Vec<f64>;
    /// Log-density of observing `y` at `state`; −∞ marks impossible.
    fn obs_log_density(&self, state: &[f64], y: &[f64]) -> f64;
    /// Metric for bounded-Lipschitz distances between clouds.
    fn metric(&self) -> MetricSpec;
}

/// Systematic resampling: one shared uniform offset, equally spaced targets.
fn systematic_indices(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n_out);
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        while idx.len() < n_out && (idx.len() as f64 + u) / n_out as f64 <= cum {
            idx.push(i);
        }
    }
    while idx.len() < n_out {
        idx.push(weights.len() - 1);
    }
    idx
}

/// One bootstrap step: propagate every atom, reweight by the observation
/// log-density of `y`, normalize in log space, and systematically resample
/// when the effective sample size drops below `threshold · N`.
pub fn filter_update_particle<M: ParticleModel + ?Sized>(
    model: &M,
    cloud: &AtomicMeasure,
    y: &[f64],
    cfg: &ParticleConfig,
    stream: &mut Stream,
) -> Result<AtomicMeasure> {
    let (atoms, weights) = propagate_and_weight(model, cloud, y, stream)?;
    let n = atoms.len();
    if effective_sample_size(&weights) < cfg.resample_threshold * n as f64 {
        let u = stream.uniform();
        let idx = systematic_indices(&weights, n, u);
        let new_atoms: Vec<Vec<f64>> = idx.into_iter().map(|i| atoms[i].clone()).collect();
        AtomicMeasure::equal_weights(new_atoms)
    } else {
        AtomicMeasure::new(atoms, weights)
    }
}

/// Propagate every atom and compute the normalized posterior weights — the
/// shared first half of a bootstrap step, before any resampling decision.
fn propagate_and_weight<M: ParticleModel + ?Sized>(
    model: &M,
    cloud: &AtomicMeasure,
    y: &[f64],
    stream: &mut Stream,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if y.len() != model.obs_dim() {
        return Err(Error::Dimension(format!(
            "observation has {} coordinates, model expects {}",
            y.len(),
            model.obs_dim()
        )));
    }
    let n = cloud.len();
    let mut atoms: Vec<Vec<f64>> = cloud.atoms().to_vec();
    let mut logw: Vec<f64> = Vec::with_capacity(n);
    for (atom, &w) in atoms.iter_mut().zip(cloud.weights()) {
        model.step_state(atom, stream)?;
        let lw = if w > 0.0 { w.ln() + model.obs_log_density(atom, y) } else { f64::NEG_INFINITY };
        logw.push(lw);
    }
    let norm = log_sum_exp(&logw);
    if norm == f64::NEG_INFINITY {
        return Err(Error::Degenerate(
            "all particle weights vanished: observation density is zero on the whole cloud"
                .into(),
        ));
    }
    let weights: Vec<f64> = logw.iter().map(|&lw| (lw - norm).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok((atoms, weights.iter().map(|w| w / total).collect()))
}

fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// One common-random-numbers step for a coupled pair of bootstrap filters on
/// the same observation. Both clouds consume the identical draw sequence (the
/// second replays a clone of the stream), they resample together whenever
/// EITHER effective sample size falls below the threshold, and the ancestor
/// indices come from the maximal coupling of the two weight vectors: with
/// probability Σᵢ min(wᵃᵢ, wᵇᵢ) a draw picks the same ancestor for both
/// clouds, the rest comes from the independent residuals. Each marginal is
/// exactly multinomial resampling under its own weights, so each filter
/// alone remains a valid bootstrap filter, while the pair is maximally
/// index-coupled: identical clouds remain identical forever, and as the
/// synchronously driven atoms contract toward each other the shared-ancestor
/// fraction climbs to one.
pub fn filter_update_pair<M: ParticleModel + ?Sized>(
    model: &M,
    cloud_a: &AtomicMeasure,
    cloud_b: &AtomicMeasure,
    y: &[f64],
    cfg: &ParticleConfig,
    stream: &mut Stream,
) -> Result<(AtomicMeasure, AtomicMeasure)> {
    if cloud_a.len() != cloud_b.len() {
        return Err(Error::Dimension(format!(
            "coupled clouds must have equal sizes, got {} and {}",
            cloud_a.len(),
            cloud_b.len()
        )));
    }
    let mut replay = stream.clone();
    let (atoms_a, w_a) = propagate_and_weight(model, cloud_a, y, stream)?;
    let (atoms_b, w_b) = propagate_and_weight(model, cloud_b, y, &mut replay)?;
    let n = atoms_a.len();
    let threshold = cfg.resample_threshold * n as f64;
    if effective_sample_size(&w_a).min(effective_sample_size(&w_b)) < threshold {
        let (ia, ib) = coupled_ancestors(&w_a, &w_b, n, stream);
        Ok((
            AtomicMeasure::equal_weights(ia.into_iter().map(|i| atoms_a[i].clone()).collect())?,
            AtomicMeasure::equal_weights(ib.into_iter().map(|i| atoms_b[i].clone()).collect())?,
        ))
    } else {
        Ok((AtomicMeasure::new(atoms_a, w_a)?, AtomicMeasure::new(atoms_b, w_b)?))
    }
}

/// `n_out` ancestor pairs from the maximal coupling of two weight vectors.
/// A draw lands in the overlap Σ min(wᵃ, wᵇ) with one shared index, or in
/// the two independent residuals otherwise. Marginally each output column is
/// multinomial under its own weights.
fn coupled_ancestors(
    w_a: &[f64],
    w_b: &[f64],
    n_out: usize,
    stream: &mut Stream,
) -> (Vec<usize>, Vec<usize>) {
    let mins: Vec<f64> = w_a.iter().zip(w_b).map(|(a, b)| a.min(*b)).collect();
    let common: f64 = mins.iter().sum();
    let cum_min = cumulative(&mins);
    let cum_ra = cumulative(&w_a.iter().zip(&mins).map(|(w, m)| w - m).collect::<Vec<_>>());
    let cum_rb = cumulative(&w_b.iter().zip(&mins).map(|(w, m)| w - m).collect::<Vec<_>>());
    let mut ia = Vec::with_capacity(n_out);
    let mut ib = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        let u = stream.uniform();
        if u < common {
            // u is uniform on [0, common): use it directly against the
            // unnormalized overlap table.
            let i = search_cumulative(&cum_min, u);
            ia.push(i);
            ib.push(i);
        } else {
            let va = stream.uniform() * cum_ra.last().copied().unwrap_or(0.0);
            let vb = stream.uniform() * cum_rb.last().copied().unwrap_or(0.0);
            ia.push(search_cumulative(&cum_ra, va));
            ib.push(search_cumulative(&cum_rb, vb));
        }
    }
    (ia, ib)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|&x| {
            acc += x.max(0.0);
            acc
        })
        .collect()
}

/// First index whose cumulative value exceeds `target`; the last index with
/// positive increment when rounding pushes `target` past the total.
fn search_cumulative(cum: &[f64], target: f64) -> usize {
    let mut lo = 0usize;
    let mut hi = cum.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if cum[mid] > target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Filtering posteriors by full enumeration of hidden paths — the reference
/// the fast recursion is tested against. Entry t is the posterior of the
/// hidden state at time t given observations y₀..y_t, with the filter
/// initialized at `mu` (observations enter through transition weights).
pub fn brute_force_filter(
    hmm: &FiniteHMM,
    mu: &Categorical,
    y_path: &[usize],
) -> Result<Vec<Categorical>> {
    let m = hmm.n_hidden();
    if y_path.is_empty() {
        return Err(Error::InvalidInput("observation path must be nonempty".into()));
    }
    let t_max = y_path.len() - 1;
    if t_max > BRUTE_FORCE_T_CAP {
        return Err(Error::CapExceeded(format!(
            "brute-force filter handles windows up to T = {BRUTE_FORCE_T_CAP}, got {t_max}"
        )));
    }
    if m > BRUTE_FORCE_STATE_CAP {
        return Err(Error::CapExceeded(format!(
            "brute-force filter handles up to {BRUTE_FORCE_STATE_CAP} states, got {m}"
        )));
    }
    if mu.len() != m {
        return Err(Error::Dimension(format!("prior has {} entries for {m} states", mu.len())));
    }
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        // Enumerate all hidden paths z₀..z_t against the fixed observations.
        let mut posterior = vec![0.0f64; m];
        let n_paths = (m as u64).pow(t as u32 + 1);
        for code in 0..n_paths {
            let mut c = code;
            let mut path = Vec::with_capacity(t + 1);
            for _ in 0..=t {
                path.push((c % m as u64) as usize);
                c /= m as u64;
            }
            let mut w = mu.probs()[path[0]];
            for s in 1..=t {
                if w == 0.0 {
                    break;
                }
                w *= hmm.p0().get(path[s - 1], path[s])
                    * hmm.g(path[s - 1], y_path[s - 1], path[s], y_path[s]);
            }
            posterior[path[t]] += w;
        }
        let norm: f64 = posterior.iter().sum();
        if norm <= 0.0 {
            return Err(Error::Degenerate(format!(
                "observation window has zero probability by time {t}"
            )));
        }
        for v in posterior.iter_mut() {
            *v /= norm;
        }
        out.push(Categorical::new(posterior)?);
    }
    Ok(out)
}

/// Draw an initial observation symbol for hidden state `z`: emission law in
/// the reduced form, stationary conditional otherwise.
fn initial_symbol(hmm: &FiniteHMM, z: usize, stream: &mut Stream) -> Result<usize> {
    let l = hmm.n_symbols();
    let lam = stationary(&hmm.joint_chain()?)?;
    let mut cond: Vec<f64> = (0..l).map(|y| lam.probs()[z * l + y]).collect();
    let norm: f64 = cond.iter().sum();
    if norm <= 0.0 {
        return Err(Error::Degenerate(format!(
            "hidden state {z} carries no stationary mass; cannot draw its first observation"
        )));
    }
    for v in cond.iter_mut() {
        *v /= norm;
    }
    Ok(stream.categorical(&cond))
}

/// Two exact filters on one simulated observation record. The data are
/// generated under the `gamma` prior; the filters start from `mu` and `nu`
/// and see only the observations. Stream roles: "truth".
pub fn stability_run_exact(
    hmm: &FiniteHMM,
    mu: &Categorical,
    nu: &Categorical,
    gamma: &Categorical,
    t_len: usize,
    seed: u64,
    replica: u64,
) -> Result<StabilityCurve> {
    let m = hmm.n_hidden();
    if mu.len() != m || nu.len() != m || gamma.len() != m {
        return Err(Error::Dimension(format!("priors must have {m} entries")));
    }
    if t_len < 1 {
        return Err(Error::InvalidInput("stability run needs T >= 1".into()));
    }
    let mut stream = Stream::new(seed, replica, "truth");
    let mut z = stream.categorical(gamma.probs());
    let mut y = initial_symbol(hmm, z, &mut stream)?;

    let mut pi_mu = mu.clone();
    let mut pi_nu = nu.clone();
    let mut rows = Vec::with_capacity(t_len + 1);
    rows.push(StabilityRow {
        n: 0,
        distance: tv_categorical(&pi_mu, &pi_nu)?,
        kind: DistanceKind::Tv,
        field: "full".into(),
    });
    let l = hmm.n_symbols();
    for n in 1..=t_len {
        // Joint transition of the data-generating pair.
        let mut wts = Vec::with_capacity(m * l);
        for zp in 0..m {
            for yp in 0..l {
                wts.push(hmm.joint_prob(z, y, zp, yp));
            }
        }
        let pick = stream.categorical(&wts);
        let (zp, yp) = (pick / l, pick % l);
        pi_mu = filter_update_exact(hmm, &pi_mu, y, yp)?;
        pi_nu = filter_update_exact(hmm, &pi_nu, y, yp)?;
        z = zp;
        y = yp;
        rows.push(StabilityRow {
            n,
            distance: tv_categorical(&pi_mu, &pi_nu)?,
            kind: DistanceKind::Tv,
            field: "full".into(),
        });
    }
    StabilityCurve::new(rows)
}

/// How a particle stability run turns two clouds into one number.
#[derive(Debug, Clone)]
pub enum ParticleDistance {
    /// Bounded-Lipschitz distance under the model metric, after systematic
    /// subsampling of each cloud to at most `subsample` atoms.
    Bl { subsample: usize },
    /// TV between the empirical laws of a finite window: each listed
    /// coordinate is discretized by `levels[i]` via rounding, and the two
    /// clouds are compared as histograms over window configurations.
    WindowTv { sites: Vec<usize>, levels: Vec<f64> },
}

fn window_tv(
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    sites: &[usize],
    levels: &[f64],
) -> Result<f64> {
    use std::collections::BTreeMap;
    let mut hist: BTreeMap<Vec<i64>, (f64, f64)> = BTreeMap::new();
    for (atom, &w) in a.atoms().iter().zip(a.weights()) {
        let key: Vec<i64> =
            sites.iter().zip(levels).map(|(&s, &lv)| (atom[s] / lv).round() as i64).collect();
        hist.entry(key).or_insert((0.0, 0.0)).0 += w;
    }
    for (atom, &w) in b.atoms().iter().zip(b.weights()) {
        let key: Vec<i64> =
            sites.iter().zip(levels).map(|(&s, &lv)| (atom[s] / lv).round() as i64).collect();
        hist.entry(key).or_insert((0.0, 0.0)).1 += w;
    }
    Ok(hist.values().map(|(x, y)| (x - y).abs()).sum())
}

/// Two bootstrap particle filters on one simulated observation record from a
/// continuous-state model. Priors are samplers; the data are generated under
/// `gamma`.
///
/// The two filters advance as a maximally coupled pair
/// ([`filter_update_pair`]): at step n both consume the identical fresh
/// stream `(seed, replica, "filter-step-{n}")`, resample together, and share
/// the resampling offset. The reported distance therefore reflects the
/// influence of the differing priors rather than the Monte-Carlo noise of
/// two independent clouds — the exact-filter analogue is a deterministic
/// pair given the observations — and coalescence is absorbing. The distance
/// subsample likewise shares one offset per step. The two prior samplers
/// consume replicas of one stream `(seed, replica, "filter-prior")`, so
/// priors that are deterministic transformations of each other (a shifted
/// field, a constant configuration) yield atomwise-paired initial clouds
/// while each marginal stays an exact sample of its own prior. Remaining
/// stream roles: "truth" for the data path, "bl-sub" for subsampling.
#[allow(clippy::too_many_arguments)]
pub fn stability_run_particle(
    model: &dyn ParticleModel,
    mu: &mut dyn FnMut(&mut Stream) -> Vec<f64>,
    nu: &mut dyn FnMut(&mut Stream) -> Vec<f64>,
    gamma: &mut dyn FnMut(&mut Stream) -> Vec<f64>,
    t_len: usize,
    cfg: &ParticleConfig,
    dist: &ParticleDistance,
    seed: u64,
    replica: u64,
) -> Result<StabilityCurve> {
    if t_len < 1 {
        return Err(Error::InvalidInput("stability run needs T >= 1".into()));
    }
    if let ParticleDistance::WindowTv { sites, levels } = dist {
        if sites.len() != levels.len() || sites.is_empty() {
            return Err(Error::InvalidInput(
                "window distance needs matching, nonempty sites and levels".into(),
            ));
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= model.state_dim()) {
            return Err(Error::InvalidInput(format!(
                "window site {s} outside state dimension {}",
                model.state_dim()
            )));
        }
    }
    let mut truth_stream = Stream::new(seed, replica, "truth");
    let mut mu_stream = Stream::new(seed, replica, "filter-prior");
    let mut nu_stream = mu_stream.clone();
    let mut sub_stream = Stream::new(seed, replica, "bl-sub");
    let step_stream = |n: usize| Stream::new(seed, replica, &format!("filter-step-{n}"));

    let mut truth = gamma(&mut truth_stream);
    if truth.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "prior sample has {} coordinates, model expects {}",
            truth.len(),
            model.state_dim()
        )));
    }
    let mut cloud_mu = AtomicMeasure::equal_weights(
        (0..cfg.n_particles).map(|_| mu(&mut mu_stream)).collect(),
    )?;
    let mut cloud_nu = AtomicMeasure::equal_weights(
        (0..cfg.n_particles).map(|_| nu(&mut nu_stream)).collect(),
    )?;

    let metric = model.metric();
    let mut rows = Vec::with_capacity(t_len + 1);
    let record = |n: usize,
                  a: &AtomicMeasure,
                  b: &AtomicMeasure,
                  sub: &mut Stream|
     -> Result<StabilityRow> {
        match dist {
            ParticleDistance::Bl { subsample } => {
                // One shared offset: identical clouds subsample identically.
                let sub_seed = sub.next_u64();
                let sa = subsample_atomic(a, *subsample, sub_seed)?;
                let sb = subsample_atomic(b, *subsample, sub_seed)?;
                let sol = bl_atomic(&sa, &sb, &metric)?;
                Ok(StabilityRow {
                    n,
                    distance: sol.distance,
                    kind: DistanceKind::Bl,
                    field: "full".into(),
                })
            }
            ParticleDistance::WindowTv { sites, levels } => Ok(StabilityRow {
                n,
                distance: window_tv(a, b, sites, levels)?,
                kind: DistanceKind::Tv,
                field: format!("window:{sites:?}"),
            }),
        }
    };
    rows.push(record(0, &cloud_mu, &cloud_nu, &mut sub_stream)?);

    for n in 1..=t_len {
        model.step_state(&mut truth, &mut truth_stream)?;
        let y = model.observe(&truth, &mut truth_stream);
        let (next_mu, next_nu) =
            filter_update_pair(model, &cloud_mu, &cloud_nu, &y, cfg, &mut step_stream(n))?;
        cloud_mu = next_mu;
        cloud_nu = next_nu;
        rows.push(record(n, &cloud_mu, &cloud_nu, &mut sub_stream)?);
    }
    StabilityCurve::new(rows)
}

/// One step of the filter-and-observation Markov kernel: sample the next
/// pair from the filter's predictive law, then apply the exact update.
pub fn gamma_step(
    hmm: &FiniteHMM,
    nu: &Categorical,
    y: usize,
    stream: &mut Stream,
) -> Result<(Categorical, usize)> {
    let m = hmm.n_hidden();
    let l = hmm.n_symbols();
    if nu.len() != m {
        return Err(Error::Dimension(format!("filter has {} entries for {m} states", nu.len())));
    }
    if y >= l {
        return Err(Error::InvalidInput(format!("symbol {y} outside alphabet of size {l}")));
    }
    let mut wts = Vec::with_capacity(m * l);
    for xp in 0..m {
        for yp in 0..l {
            let mut acc = 0.0;
            for (x, &w) in nu.probs().iter().enumerate() {
                if w > 0.0 {
                    acc += w * hmm.joint_prob(x, y, xp, yp);
                }
            }
            wts.push(acc);
        }
    }
    let pick = stream.categorical(&wts);
    let yp = pick % l;
    let next = filter_update_exact(hmm, nu, y, yp)?;
    Ok((next, yp))
}

/// A finite hidden Markov model dressed up as a continuous-state model: the
/// hidden index is the single state coordinate and observations are symbol
/// indices. Lets the particle machinery be tested against the exact filter.
#[derive(Debug, Clone)]
pub struct EmbeddedHmm {
    hmm: FiniteHMM,
}

impl EmbeddedHmm {
    pub fn new(hmm: FiniteHMM) -> Self {
        EmbeddedHmm { hmm }
    }

    pub fn hmm(&self) -> &FiniteHMM {
        &self.hmm
    }

    /// Collapse a particle cloud to a categorical over the hidden states.
    pub fn cloud_to_categorical(&self, cloud: &AtomicMeasure) -> Result<Categorical> {
        let m = self.hmm.n_hidden();
        let mut probs = vec![0.0; m];
        for (atom, &w) in cloud.atoms().iter().zip(cloud.weights()) {
            let idx = atom[0].round() as usize;
            if idx >= m {
                return Err(Error::InvalidInput(format!(
                    "cloud atom {} is not a state index below {m}",
                    atom[0]
                )));
            }
            probs[idx] += w;
        }
        Categorical::new(probs)
    }
}

impl ParticleModel for EmbeddedHmm {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn step_state(&self, state: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        let x = state[0].round() as usize;
        if x >= self.hmm.n_hidden() {
            return Err(Error::InvalidInput(format!("state {x} outside the hidden alphabet")));
        }
        state[0] = stream.categorical(self.hmm.p0().row(x)) as f64;
        Ok(())
    }

    fn observe(&self, state: &[f64], stream: &mut Stream) -> Vec<f64> {
        let x = state[0].round() as usize;
        let l = self.hmm.n_symbols();
        // Emission weights Φ(x, ·) expressed through the transition factors:
        // g(·,·,x,y)·Q normalizes to the per-state observation law.
        let wts: Vec<f64> = (0..l).map(|y| self.hmm.g(0, 0, x, y) * self.hmm.q(0, y)).collect();
        vec![stream.categorical(&wts) as f64]
    }

    fn obs_log_density(&self, state: &[f64], y: &[f64]) -> f64 {
        let x = state[0].round() as usize;
        let sym = y[0].round() as usize;
        let w = self.hmm.g(0, 0, x, sym) * self.hmm.q(0, sym);
        if w > 0.0 {
            w.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn metric(&self) -> MetricSpec {
        MetricSpec::Euclidean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::simulate;
    use crate::linalg::Mat;
    use crate::measure::tv_slices;
    use crate::models::fixtures;

    #[test]
    fn flat_likelihood_update_is_pure_propagation() {
        let hmm = fixtures::flat_hmm();
        let nu = Categorical::new(vec![0.6, 0.3, 0.1]).unwrap();
        let got = filter_update_exact(&hmm, &nu, 1, 2).unwrap();
        let expect = hmm.p0().vecmul(nu.probs());
        for (a, b) in got.probs().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_chain_update_is_bayes_rule() {
        // P0 = identity, uniform prior, likelihood column (0.8, 0.2).
        let p0 = Mat::identity(2);
        let phi = Mat::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let hmm = FiniteHMM::reduced(p0, phi).unwrap();
        let nu = Categorical::uniform(2).unwrap();
        let got = filter_update_exact(&hmm, &nu, 0, 0).unwrap();
        assert!((got.probs()[0] - 0.8).abs() < 1e-15);
        assert!((got.probs()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exact_filter_matches_brute_force_on_fixtures() {
        for hmm in [
            fixtures::mixing3_hmm(),
            fixtures::revealing_hmm(0.05).unwrap(),
            fixtures::flat_hmm(),
            fixtures::parity_degenerate_hmm(),
        ] {
            let (_, y) = simulate(&hmm, 8, 123, 0).unwrap();
            let mu = Categorical::uniform(hmm.n_hidden()).unwrap();
            let brute = brute_force_filter(&hmm, &mu, &y).unwrap();
            let mut pi = mu.clone();
            for (a, b) in pi.probs().iter().zip(brute[0].probs()) {
                assert!((a - b).abs() < 1e-12);
            }
            for t in 1..y.len() {
                pi = filter_update_exact(&hmm, &pi, y[t - 1], y[t]).unwrap();
                for (a, b) in pi.probs().iter().zip(brute[t].probs()) {
                    assert!((a - b).abs() < 1e-12, "time {t}");
                }
            }
        }
    }

    #[test]
    fn brute_force_flat_gives_prior_marginals() {
        let hmm = fixtures::flat_hmm();
        let mu = Categorical::new(vec![0.5, 0.25, 0.25]).unwrap();
        let y = vec![0, 1, 2, 0, 1];
        let brute = brute_force_filter(&hmm, &mu, &y).unwrap();
        let mut marginal = mu.probs().to_vec();
        for (t, post) in brute.iter().enumerate() {
            for (a, b) in post.probs().iter().zip(&marginal) {
                assert!((a - b).abs() < 1e-12, "time {t}");
            }
            marginal = hmm.p0().vecmul(&marginal);
        }
    }

    #[test]
    fn brute_force_revealing_pins_the_true_path() {
        // Exactly revealing emissions: y = x with probability one.
        let p0 = fixtures::mixing3_hmm().p0().clone();
        let phi = Mat::identity(3);
        let hmm = FiniteHMM::reduced(p0, phi).unwrap();
        let mu = Categorical::uniform(3).unwrap();
        let y = vec![2, 0, 1, 1, 2];
        let brute = brute_force_filter(&hmm, &mu, &y).unwrap();
        // From step 1 onward the posterior is the point mass at the symbol.
        for t in 1..y.len() {
            assert!((brute[t].probs()[y[t]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_caps_are_enforced() {
        let hmm = fixtures::mixing3_hmm();
        let mu = Categorical::uniform(3).unwrap();
        let long = vec![0usize; BRUTE_FORCE_T_CAP + 2];
        assert!(matches!(
            brute_force_filter(&hmm, &mu, &long),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn stability_exact_flat_matches_matrix_powers() {
        let hmm = fixtures::flat_hmm();
        let mu = Categorical::new(vec![1.0, 0.0, 0.0]).unwrap();
        let nu = Categorical::new(vec![0.0, 1.0, 0.0]).unwrap();
        let gamma = Categorical::uniform(3).unwrap();
        let curve = stability_run_exact(&hmm, &mu, &nu, &gamma, 12, 7, 0).unwrap();
        let mut a = mu.probs().to_vec();
        let mut b = nu.probs().to_vec();
        for row in curve.rows() {
            assert!((row.distance - tv_slices(&a, &b)).abs() < 1e-12, "step {}", row.n);
            a = hmm.p0().vecmul(&a);
            b = hmm.p0().vecmul(&b);
        }
    }

    #[test]
    fn stability_exact_revealing_collapses_to_zero() {
        let p0 = Mat::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let phi = Mat::identity(2);
        let hmm = FiniteHMM::reduced(p0, phi).unwrap();
        let mu = Categorical::new(vec![0.9, 0.1]).unwrap();
        let nu = Categorical::new(vec![0.1, 0.9]).unwrap();
        let gamma = Categorical::uniform(2).unwrap();
        let curve = stability_run_exact(&hmm, &mu, &nu, &gamma, 10, 3, 0).unwrap();
        assert!(curve.rows()[0].distance > 0.0);
        for row in &curve.rows()[1..] {
            assert_eq!(row.distance, 0.0, "step {}", row.n);
        }
    }

    #[test]
    fn stability_exact_mixing_filters_merge() {
        let hmm = fixtures::mixing3_hmm();
        let mu = Categorical::new(vec![1.0, 0.0, 0.0]).unwrap();
        let nu = Categorical::new(vec![0.0, 0.0, 1.0]).unwrap();
        let gamma = Categorical::uniform(3).unwrap();
        for r in 0..5 {
            let curve = stability_run_exact(&hmm, &mu, &nu, &gamma, 200, 42, r).unwrap();
            let last = curve.rows().last().unwrap();
            assert!(last.distance < 1e-6, "replica {r}: final TV {}", last.distance);
        }
    }

    #[test]
    fn particle_filter_matches_exact_on_embedded_hmm() {
        let model = EmbeddedHmm::new(fixtures::mixing3_hmm());
        let hmm = model.hmm().clone();
        let (_, y) = simulate(&hmm, 60, 21, 0).unwrap();
        let cfg = ParticleConfig::new(4000, 0.5).unwrap();
        let mut stream = Stream::new(99, 0, "particle");
        let mu = Categorical::uniform(3).unwrap();
        let mut cloud = AtomicMeasure::equal_weights(
            (0..cfg.n_particles).map(|i| vec![(i % 3) as f64]).collect(),
        )
        .unwrap();
        let mut pi = mu.clone();
        let mut worst: f64 = 0.0;
        for t in 1..y.len() {
            pi = filter_update_exact(&hmm, &pi, y[t - 1], y[t]).unwrap();
            cloud = filter_update_particle(
                &model,
                &cloud,
                &[y[t] as f64],
                &cfg,
                &mut stream,
            )
            .unwrap();
            let approx = model.cloud_to_categorical(&cloud).unwrap();
            worst = worst.max(tv_categorical(&pi, &approx).unwrap());
        }
        assert!(worst <= 0.05, "worst per-step TV to exact filter: {worst}");
    }

    #[test]
    fn particle_filter_is_deterministic_given_the_stream() {
        let model = EmbeddedHmm::new(fixtures::mixing3_hmm());
        let cfg = ParticleConfig::new(100, 0.5).unwrap();
        let cloud = AtomicMeasure::equal_weights(
            (0..100).map(|i| vec![(i % 3) as f64]).collect(),
        )
        .unwrap();
        let mut s1 = Stream::new(4, 0, "particle");
        let mut s2 = Stream::new(4, 0, "particle");
        let a = filter_update_particle(&model, &cloud, &[1.0], &cfg, &mut s1).unwrap();
        let b = filter_update_particle(&model, &cloud, &[1.0], &cfg, &mut s2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn particle_flat_likelihood_is_unbiased_propagation() {
        let model = EmbeddedHmm::new(fixtures::flat_hmm());
        let hmm = model.hmm().clone();
        let n = 20_000;
        let cfg = ParticleConfig::new(n, 0.5).unwrap();
        let mut stream = Stream::new(17, 0, "particle");
        // All particles start in state 0.
        let mut cloud =
            AtomicMeasure::equal_weights((0..n).map(|_| vec![0.0]).collect()).unwrap();
        let mut marginal = vec![1.0, 0.0, 0.0];
        for _ in 0..3 {
            cloud = filter_update_particle(&model, &cloud, &[0.0], &cfg, &mut stream).unwrap();
            marginal = hmm.p0().vecmul(&marginal);
        }
        // Flat weights: no resampling can trigger, weights stay uniform.
        for &w in cloud.weights() {
            assert!((w - 1.0 / n as f64).abs() < 1e-15);
        }
        // Cloud means of the indicator test functions match propagation.
        let approx = model.cloud_to_categorical(&cloud).unwrap();
        for (state, (&got, &expect)) in
            approx.probs().iter().zip(&marginal).enumerate()
        {
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (got - expect).abs() < 3.0 * se + 1e-9,
                "state {state}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn particle_update_rejects_impossible_observation() {
        // Exactly revealing emissions and a cloud concentrated on the wrong
        // state: every weight vanishes.
        let p0 = Mat::identity(2);
        let phi = Mat::identity(2);
        let hmm = FiniteHMM::reduced(p0, phi).unwrap();
        let model = EmbeddedHmm::new(hmm);
        let cfg = ParticleConfig::new(10, 0.5).unwrap();
        let cloud =
            AtomicMeasure::equal_weights((0..10).map(|_| vec![0.0]).collect()).unwrap();
        let mut stream = Stream::new(0, 0, "particle");
        let err = filter_update_particle(&model, &cloud, &[1.0], &cfg, &mut stream).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn stability_particle_runs_and_starts_positive() {
        let model = EmbeddedHmm::new(fixtures::mixing3_hmm());
        let cfg = ParticleConfig::new(300, 0.5).unwrap();
        let mut mu = |s: &mut Stream| vec![s.pick(1) as f64]; // point mass at 0
        let mut nu = |s: &mut Stream| vec![2.0 + 0.0 * s.uniform()]; // point mass at 2
        let mut gamma = |s: &mut Stream| vec![s.pick(3) as f64];
        let curve = stability_run_particle(
            &model,
            &mut mu,
            &mut nu,
            &mut gamma,
            25,
            &cfg,
            &ParticleDistance::Bl { subsample: 120 },
            11,
            0,
        )
        .unwrap();
        assert_eq!(curve.rows().len(), 26);
        assert!(curve.rows()[0].distance > 0.5, "distinct priors start apart");
        let tail = curve.rows().last().unwrap().distance;
        assert!(tail < 0.2, "filters should approach each other, final {tail}");
        // Determinism across identical calls.
        let mut mu2 = |s: &mut Stream| vec![s.pick(1) as f64];
        let mut nu2 = |s: &mut Stream| vec![2.0 + 0.0 * s.uniform()];
        let mut gamma2 = |s: &mut Stream| vec![s.pick(3) as f64];
        let again = stability_run_particle(
            &model,
            &mut mu2,
            &mut nu2,
            &mut gamma2,
            25,
            &cfg,
            &ParticleDistance::Bl { subsample: 120 },
            11,
            0,
        )
        .unwrap();
        for (a, b) in curve.rows().iter().zip(again.rows()) {
            assert_eq!(a.distance, b.distance);
        }
    }

    #[test]
    fn window_tv_distance_sees_only_the_window() {
        let a = AtomicMeasure::equal_weights(vec![vec![0.0, 5.0], vec![1.0, -3.0]]).unwrap();
        let b = AtomicMeasure::equal_weights(vec![vec![0.0, 9.0], vec![1.0, 2.0]]).unwrap();
        // Window on coordinate 0 only: identical laws there.
        assert_eq!(window_tv(&a, &b, &[0], &[1.0]).unwrap(), 0.0);
        // Window on coordinate 1: disjoint supports.
        assert_eq!(window_tv(&a, &b, &[1], &[1.0]).unwrap(), 2.0);
    }

    #[test]
    fn gamma_step_flat_is_deterministic_propagation() {
        let hmm = fixtures::flat_hmm();
        let nu = Categorical::new(vec![0.2, 0.5, 0.3]).unwrap();
        let mut stream = Stream::new(5, 0, "gamma");
        let (next, yp) = gamma_step(&hmm, &nu, 0, &mut stream).unwrap();
        assert!(yp < 3);
        let expect = hmm.p0().vecmul(nu.probs());
        for (a, b) in next.probs().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_step_is_deterministic_given_the_stream() {
        let hmm = fixtures::mixing3_hmm();
        let nu = Categorical::uniform(3).unwrap();
        let mut s1 = Stream::new(9, 1, "gamma");
        let mut s2 = Stream::new(9, 1, "gamma");
        let (a, ya) = gamma_step(&hmm, &nu, 2, &mut s1).unwrap();
        let (b, yb) = gamma_step(&hmm, &nu, 2, &mut s2).unwrap();
        assert_eq!(ya, yb);
        assert_eq!(a.probs(), b.probs());
    }

    #[test]
    fn gamma_preserves_the_observation_marginal() {
        let hmm = fixtures::mixing3_hmm();
        let lam = stationary(&hmm.joint_chain().unwrap()).unwrap();
        let l = hmm.n_symbols();
        let mut y_marginal = vec![0.0; l];
        for (i, &p) in lam.probs().iter().enumerate() {
            y_marginal[i % l] += p;
        }
        // Start the pair chain at its stationary observation component.
        let mut stream = Stream::new(31, 0, "gamma");
        let mut nu = {
            // Conditional law of x given the initial symbol 0.
            let mut cond: Vec<f64> = (0..3).map(|x| lam.probs()[x * l]).collect();
            let norm: f64 = cond.iter().sum();
            for v in cond.iter_mut() {
                *v /= norm;
            }
            Categorical::new(cond).unwrap()
        };
        let mut y = 0usize;
        let t_len = 60_000;
        let mut counts = vec![0usize; l];
        let mut batch_means = Vec::new();
        let batch = 600;
        let mut in_batch = vec![0usize; l];
        for t in 0..t_len {
            let (next, yp) = gamma_step(&hmm, &nu, y, &mut stream).unwrap();
            nu = next;
            y = yp;
            counts[y] += 1;
            in_batch[y] += 1;
            if (t + 1) % batch == 0 {
                batch_means.push(in_batch.iter().map(|&c| c as f64 / batch as f64).collect::<Vec<_>>());
                in_batch = vec![0usize; l];
            }
        }
        for sym in 0..l {
            let means: Vec<f64> = batch_means.iter().map(|m| m[sym]).collect();
            let nb = means.len() as f64;
            let grand: f64 = means.iter().sum::<f64>() / nb;
            let var: f64 =
                means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (nb - 1.0);
            let se = (var / nb).sqrt();
            assert!(
                (grand - y_marginal[sym]).abs() < 3.0 * se.max(1e-4),
                "symbol {sym}: {grand} vs {} (se {se})",
                y_marginal[sym]
            );
        }
    }

    #[test]
    fn config_and_curve_validation() {
        assert!(ParticleConfig::new(1, 0.5).is_err());
        assert!(ParticleConfig::new(10, 0.0).is_err());
        assert!(ParticleConfig::new(10, 1.5).is_err());
        let bad = StabilityCurve::new(vec![
            StabilityRow { n: 0, distance: 0.1, kind: DistanceKind::Tv, field: "full".into() },
            StabilityRow { n: 0, distance: 0.2, kind: DistanceKind::Tv, field: "full".into() },
        ]);
        assert!(bad.is_err());
        let bad2 = StabilityCurve::new(vec![StabilityRow {
            n: 0,
            distance: 2.5,
            kind: DistanceKind::Tv,
            field: "full".into(),
        }]);
        assert!(bad2.is_err());
    }
}
