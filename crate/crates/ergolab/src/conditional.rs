//! Finite hidden Markov models and the exact conditional chain of the hidden
//! state given an observation record.
//!
//! Conditioned on a fixed observation window, the hidden state is again a
//! Markov chain — inhomogeneous, with transition matrices depending on the
//! observations. This module builds those matrices exactly (log-space
//! backward recursions) and measures how fast the conditional chain forgets
//! its starting point: conditional TV between initial states, a conditional
//! absolute-regularity coefficient, and a multi-path inheritance experiment
//! contrasting models whose observations do or do not preserve mixing.

use crate::linalg::{log_sum_exp, Mat};
use crate::markov::{stationary, FiniteChain};
use crate::measure::tv_slices;
use crate::rng::Stream;
use crate::{Error, Result, PROB_TOL};

/// Conditional transition rows must sum to 1 within this tolerance.
pub const CONDITIONAL_ROW_TOL: f64 = 1e-10;

/// Observation model: either a per-state emission matrix (the classical
/// hidden-Markov form) or a fully general positive transition-weight tensor
/// paired with an autonomous observation kernel.
#[derive(Debug, Clone, PartialEq)]
enum HmmForm {
    /// Emissions Φ(x', y') = P[Y' = y' | X' = x']; rows stochastic.
    Reduced { phi: Mat },
    /// Weights g(x, y, x', y') correcting the product kernel P0 ⊗ Q; the
    /// induced joint kernel g·P0·Q must be row-stochastic.
    General { q: Mat, g: Vec<f64> },
}

/// Hidden Markov model with `m` hidden states and `l` observation symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHMM {
    m: usize,
    l: usize,
    p0: Mat,
    form: HmmForm,
}

impl FiniteHMM {
    /// Classical form: hidden kernel `p0` plus emission matrix `phi`
    /// (`m×l`, rows stochastic).
    pub fn reduced(p0: Mat, phi: Mat) -> Result<Self> {
        let chain = FiniteChain::new(p0)?;
        let p0 = chain.p().clone();
        let m = p0.rows;
        if phi.rows != m {
            return Err(Error::Dimension(format!(
                "emission matrix has {} rows for {m} hidden states",
                phi.rows
            )));
        }
        let l = phi.cols;
        if l == 0 {
            return Err(Error::InvalidInput("need at least one observation symbol".into()));
        }
        for x in 0..m {
            let mut sum = 0.0;
            for y in 0..l {
                let v = phi.get(x, y);
                if !(v >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "emission probability Φ({x},{y}) = {v} is negative"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidInput(format!(
                    "emission row {x} sums to {sum}, not 1 within {PROB_TOL}"
                )));
            }
        }
        Ok(FiniteHMM { m, l, p0, form: HmmForm::Reduced { phi } })
    }

    /// General form: `g` is indexed `[((x·l + y)·m + x')·l + y']` and the
    /// induced joint kernel `g(x,y,x',y')·P0(x,x')·Q(y,y')` must be
    /// row-stochastic.
    pub fn general(p0: Mat, q: Mat, g: Vec<f64>) -> Result<Self> {
        let chain = FiniteChain::new(p0)?;
        let p0 = chain.p().clone();
        let m = p0.rows;
        let qchain = FiniteChain::new(q)?;
        let q = qchain.p().clone();
        let l = q.rows;
        if g.len() != m * l * m * l {
            return Err(Error::Dimension(format!(
                "weight tensor has {} entries, expected {}",
                g.len(),
                m * l * m * l
            )));
        }
        if let Some(bad) = g.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weight tensor entry {bad} is not a finite nonnegative number"
            )));
        }
        let hmm = FiniteHMM { m, l, p0, form: HmmForm::General { q, g } };
        for x in 0..m {
            for y in 0..l {
                let mut sum = 0.0;
                for xp in 0..m {
                    for yp in 0..l {
                        sum += hmm.joint_prob(x, y, xp, yp);
                    }
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidInput(format!(
                        "joint kernel row ({x},{y}) sums to {sum}, not 1 within {PROB_TOL}"
                    )));
                }
            }
        }
        Ok(hmm)
    }

    pub fn n_hidden(&self) -> usize {
        self.m
    }

    pub fn n_symbols(&self) -> usize {
        self.l
    }

    pub fn p0(&self) -> &Mat {
        &self.p0
    }

    /// Transition weight g(x, y, x', y'); in the reduced form this is
    /// `l · Φ(x', y')`.
    pub fn g(&self, x: usize, y: usize, xp: usize, yp: usize) -> f64 {
        match &self.form {
            HmmForm::Reduced { phi } => {
                let _ = (x, y);
                self.l as f64 * phi.get(xp, yp)
            }
            HmmForm::General { g, .. } => g[((x * self.l + y) * self.m + xp) * self.l + yp],
        }
    }

    /// Autonomous observation kernel Q(y, y'); uniform in the reduced form.
    pub fn q(&self, y: usize, yp: usize) -> f64 {
        match &self.form {
            HmmForm::Reduced { .. } => 1.0 / self.l as f64,
            HmmForm::General { q, .. } => q.get(y, yp),
        }
    }

    /// Joint one-step probability P[(x,y) → (x',y')].
    pub fn joint_prob(&self, x: usize, y: usize, xp: usize, yp: usize) -> f64 {
        self.g(x, y, xp, yp) * self.p0.get(x, xp) * self.q(y, yp)
    }

    /// True when every transition weight is strictly positive, so no
    /// observation can rule out a hidden transition.
    pub fn nondegenerate(&self) -> bool {
        match &self.form {
            HmmForm::Reduced { phi } => phi.data.iter().all(|&v| v > 0.0),
            HmmForm::General { g, .. } => g.iter().all(|&v| v > 0.0),
        }
    }

    /// The bivariate chain on pairs (x, y), indexed `x·l + y`.
    pub fn joint_chain(&self) -> Result<FiniteChain> {
        let n = self.m * self.l;
        let mut p = Mat::zeros(n, n);
        for x in 0..self.m {
            for y in 0..self.l {
                for xp in 0..self.m {
                    for yp in 0..self.l {
                        p.set(x * self.l + y, xp * self.l + yp, self.joint_prob(x, y, xp, yp));
                    }
                }
            }
        }
        // Guard against ulp drift in the assembled rows.
        for i in 0..n {
            let sum: f64 = p.row(i).iter().sum();
            for j in 0..n {
                p.set(i, j, p.get(i, j) / sum);
            }
        }
        FiniteChain::new(p)
    }

    fn check_path(&self, y: &[usize]) -> Result<()> {
        if y.is_empty() {
            return Err(Error::InvalidInput("observation path must be nonempty".into()));
        }
        if let Some(&bad) = y.iter().find(|&&s| s >= self.l) {
            return Err(Error::InvalidInput(format!(
                "observation symbol {bad} outside alphabet of size {}",
                self.l
            )));
        }
        Ok(())
    }
}

/// The hidden chain conditioned on a fixed observation window y₀..y_T:
/// transition matrices M₁..M_T plus the conditional law of the time-0 state.
#[derive(Debug, Clone)]
pub struct ConditionalChain {
    ms: Vec<Mat>,
    initial: Vec<f64>,
}

impl ConditionalChain {
    /// M_t for t = 1..=T.
    pub fn transition(&self, t: usize) -> &Mat {
        &self.ms[t - 1]
    }

    pub fn window_len(&self) -> usize {
        self.ms.len()
    }

    /// Conditional law of Z₀ given the observation window.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Row z of the product M₁·…·M_n (the conditional law of Z_n given
    /// Z₀ = z and the observations). n = 0 gives the point mass.
    pub fn propagate_row(&self, z: usize, n: usize) -> Vec<f64> {
        let m = self.initial.len();
        let mut row = vec![0.0; m];
        row[z] = 1.0;
        for t in 1..=n {
            row = self.ms[t - 1].vecmul(&row);
        }
        row
    }

    /// All rows of M₁·…·M_n at once, along with the initial-mixture row.
    fn propagate_all(&self, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let m = self.initial.len();
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|z| {
                let mut r = vec![0.0; m];
                r[z] = 1.0;
                r
            })
            .collect();
        for t in 1..=n {
            for r in rows.iter_mut() {
                *r = self.ms[t - 1].vecmul(r);
            }
        }
        let mut mixture = vec![0.0; m];
        for (z, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                mixture[j] += self.initial[z] * v;
            }
        }
        (rows, mixture)
    }
}

/// Exact conditional transition matrices of the hidden chain given the
/// observation window `y`, via log-space backward recursions.
pub fn conditional_transitions(hmm: &FiniteHMM, y: &[usize]) -> Result<ConditionalChain> {
    hmm.check_path(y)?;
    let m = hmm.n_hidden();
    let t_max = y.len() - 1;

    // Backward variables over hidden states, in log space, renormalized by
    // max-subtraction each step (only ratios matter).
    let mut log_beta = vec![vec![0.0f64; m]; t_max + 1];
    for t in (0..t_max).rev() {
        let mut scratch = Vec::with_capacity(m);
        for z in 0..m {
            scratch.clear();
            for zp in 0..m {
                let w = hmm.p0().get(z, zp) * hmm.g(z, y[t], zp, y[t + 1]);
                if w > 0.0 {
                    scratch.push(w.ln() + log_beta[t + 1][zp]);
                }
            }
            log_beta[t][z] = log_sum_exp(&scratch);
        }
        let peak = log_beta[t].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!(
                "all backward variables vanish at time {t}; the observation window has \
                 probability zero under this model"
            )));
        }
        for v in log_beta[t].iter_mut() {
            *v -= peak;
        }
    }

    let mut ms = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let mut mt = Mat::zeros(m, m);
        for z in 0..m {
            let mut logs = vec![f64::NEG_INFINITY; m];
            for zp in 0..m {
                let w = hmm.p0().get(z, zp) * hmm.g(z, y[t - 1], zp, y[t]);
                if w > 0.0 {
                    logs[zp] = w.ln() + log_beta[t][zp];
                }
            }
            let norm = log_sum_exp(&logs);
            if norm == f64::NEG_INFINITY {
                return Err(Error::Degenerate(format!(
                    "conditional transition row {z} at time {t} has zero mass; \
                     the model is degenerate on this observation path"
                )));
            }
            let mut sum = 0.0;
            for zp in 0..m {
                let v = (logs[zp] - norm).exp();
                mt.set(z, zp, v);
                sum += v;
            }
            if (sum - 1.0).abs() > CONDITIONAL_ROW_TOL {
                return Err(Error::Solver(format!(
                    "conditional row normalization drifted to {sum} at time {t}"
                )));
            }
        }
        ms.push(mt);
    }

    // Conditional law of Z₀: stationary joint mass at (z, y₀) times the
    // backward weight of the rest of the window.
    let joint = hmm.joint_chain()?;
    let lam = stationary(&joint)?;
    let mut logs = vec![f64::NEG_INFINITY; m];
    for z in 0..m {
        let mass = lam.probs()[z * hmm.n_symbols() + y[0]];
        if mass > 0.0 {
            logs[z] = mass.ln() + log_beta[0][z];
        }
    }
    let norm = log_sum_exp(&logs);
    if norm == f64::NEG_INFINITY {
        return Err(Error::Degenerate(
            "observation window has probability zero from the stationary start".into(),
        ));
    }
    let initial: Vec<f64> = logs.iter().map(|&lv| (lv - norm).exp()).collect();

    Ok(ConditionalChain { ms, initial })
}

/// Margin that keeps a lag away from the end of the window so the truncated
/// backward variables approximate the infinite future: a quarter of the
/// window, rounded up.
pub fn default_margin(t_max: usize) -> usize {
    t_max.div_ceil(4)
}

fn check_margin(y: &[usize], n: usize) -> Result<usize> {
    let t_max = y.len() - 1;
    let margin = default_margin(t_max);
    let limit = t_max.saturating_sub(margin);
    if n > limit {
        return Err(Error::InvalidInput(format!(
            "lag {n} exceeds the usable window: T = {t_max} minus margin {margin} allows \
             lags up to {limit}"
        )));
    }
    Ok(limit)
}

/// TV between the conditional laws of Z_n from initial states `z0` and `z0b`,
/// given the observation window.
pub fn conditional_tv(
    hmm: &FiniteHMM,
    y: &[usize],
    z0: usize,
    z0b: usize,
    n: usize,
) -> Result<f64> {
    hmm.check_path(y)?;
    if z0 >= hmm.n_hidden() || z0b >= hmm.n_hidden() {
        return Err(Error::InvalidInput(format!(
            "initial states {z0}, {z0b} must lie below {}",
            hmm.n_hidden()
        )));
    }
    check_margin(y, n)?;
    let chain = conditional_transitions(hmm, y)?;
    let a = chain.propagate_row(z0, n);
    let b = chain.propagate_row(z0b, n);
    Ok(tv_slices(&a, &b))
}

/// Conditional absolute-regularity coefficient at lag `n`:
/// `Σ_z w(z) · ‖row_z(M₁…M_n) − w·M₁…M_n‖₁` with `w` the conditional law
/// of Z₀ given the window.
pub fn conditional_beta(hmm: &FiniteHMM, y: &[usize], n: usize) -> Result<f64> {
    hmm.check_path(y)?;
    check_margin(y, n)?;
    let chain = conditional_transitions(hmm, y)?;
    let (rows, mixture) = chain.propagate_all(n);
    let mut beta = 0.0;
    for (z, row) in rows.iter().enumerate() {
        let w = chain.initial()[z];
        if w > 0.0 {
            beta += w * tv_slices(row, &mixture);
        }
    }
    Ok(beta)
}

/// Exact joint draw of hidden and observed paths of length T+1, started from
/// the stationary law of the bivariate chain. Stream role: "hmm-sim".
pub fn simulate(hmm: &FiniteHMM, t_len: usize, seed: u64, replica: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if t_len < 1 {
        return Err(Error::InvalidInput("simulation needs T >= 1".into()));
    }
    let joint = hmm.joint_chain()?;
    let lam = stationary(&joint)?;
    let mut stream = Stream::new(seed, replica, "hmm-sim");
    let l = hmm.n_symbols();
    let mut state = stream.categorical(lam.probs());
    let mut z_path = Vec::with_capacity(t_len + 1);
    let mut y_path = Vec::with_capacity(t_len + 1);
    z_path.push(state / l);
    y_path.push(state % l);
    for _ in 0..t_len {
        state = stream.categorical(joint.p().row(state));
        z_path.push(state / l);
        y_path.push(state % l);
    }
    Ok((z_path, y_path))
}

/// Per-lag summary of conditional forgetting over many simulated observation
/// paths.
#[derive(Debug, Clone)]
pub struct InheritanceTable {
    pub lags: Vec<usize>,
    /// Max over paths and ordered initial pairs of conditional TV.
    pub max_tv: Vec<f64>,
    /// Mean over paths of the worst-pair conditional TV.
    pub mean_tv: Vec<f64>,
    pub n_paths: usize,
}

/// Samples `n_paths` observation windows of length T+1 and tabulates the
/// worst-pair conditional TV at each requested lag. For models whose
/// observations never reveal too much (strictly positive transition
/// weights) every column decays; a parity-revealing counterexample keeps
/// TV pinned at 2. Lags beyond the margin-adjusted window are rejected.
pub fn inheritance_experiment(
    hmm: &FiniteHMM,
    n_paths: usize,
    t_len: usize,
    lags: &[usize],
    seed: u64,
) -> Result<InheritanceTable> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    if lags.is_empty() {
        return Err(Error::InvalidInput("need at least one lag".into()));
    }
    let mut sorted_lags = lags.to_vec();
    sorted_lags.sort_unstable();
    sorted_lags.dedup();
    let m = hmm.n_hidden();

    let mut max_tv = vec![0.0f64; sorted_lags.len()];
    let mut mean_tv = vec![0.0f64; sorted_lags.len()];

    for path_idx in 0..n_paths {
        let (_, y) = simulate(hmm, t_len, seed, path_idx as u64)?;
        check_margin(&y, *sorted_lags.last().unwrap())?;
        let chain = conditional_transitions(hmm, &y)?;
        // March all point-mass rows forward once, reading off requested lags.
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|z| {
                let mut r = vec![0.0; m];
                r[z] = 1.0;
                r
            })
            .collect();
        let mut lag_iter = sorted_lags.iter().enumerate().peekable();
        for n in 0..=*sorted_lags.last().unwrap() {
            if n > 0 {
                for r in rows.iter_mut() {
                    *r = chain.transition(n).vecmul(r);
                }
            }
            while let Some(&(li, &lag)) = lag_iter.peek() {
                if lag != n {
                    break;
                }
                let mut worst: f64 = 0.0;
                for z in 0..m {
                    for z2 in z + 1..m {
                        worst = worst.max(tv_slices(&rows[z], &rows[z2]));
                    }
                }
                max_tv[li] = max_tv[li].max(worst);
                mean_tv[li] += worst / n_paths as f64;
                lag_iter.next();
            }
        }
    }
    Ok(InheritanceTable { lags: sorted_lags, max_tv, mean_tv, n_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures;

    #[test]
    fn reduced_form_validation() {
        let p0 = Mat::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let bad_phi = Mat::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        assert!(FiniteHMM::reduced(p0.clone(), bad_phi).is_err());
        let phi = Mat::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let hmm = FiniteHMM::reduced(p0, phi).unwrap();
        assert!(hmm.nondegenerate());
        // Reduced-form accessors: g = l·Φ and Q uniform.
        assert!((hmm.g(0, 1, 1, 0) - 2.0 * 0.2).abs() < 1e-15);
        assert!((hmm.q(0, 1) - 0.5).abs() < 1e-15);
        // Joint kernel rows are stochastic.
        let joint = hmm.joint_chain().unwrap();
        for i in 0..4 {
            let s: f64 = joint.p().row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn general_form_rejects_non_stochastic_joint() {
        let p0 = Mat::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let q = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        // g ≡ 1.5 scales every row to 1.5.
        let g = vec![1.5; 16];
        assert!(FiniteHMM::general(p0, q, g).is_err());
    }

    #[test]
    fn flat_observations_reproduce_the_prior_chain() {
        let hmm = fixtures::flat_hmm();
        let y = vec![0, 2, 1, 1, 0, 2, 0, 1];
        let chain = conditional_transitions(&hmm, &y).unwrap();
        for t in 1..=7 {
            for z in 0..3 {
                for zp in 0..3 {
                    assert!(
                        (chain.transition(t).get(z, zp) - hmm.p0().get(z, zp)).abs() < 1e-12,
                        "flat likelihood must leave the prior untouched"
                    );
                }
            }
        }
        // And the conditional TV equals the unconditional one.
        let n = 3;
        let tv = conditional_tv(&hmm, &y, 0, 1, n).unwrap();
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        a[0] = 1.0;
        b[1] = 1.0;
        for _ in 0..n {
            a = hmm.p0().vecmul(&a);
            b = hmm.p0().vecmul(&b);
        }
        assert!((tv - tv_slices(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn revealing_observations_pin_the_conditional_chain() {
        let hmm = fixtures::revealing_hmm(1e-9).unwrap();
        let y = vec![0, 1, 1, 0, 1];
        let chain = conditional_transitions(&hmm, &y).unwrap();
        for t in 1..=4 {
            for z in 0..2 {
                let row = chain.transition(t).row(z);
                assert!(
                    row[y[t]] > 1.0 - 1e-6,
                    "t={t}: conditional row should concentrate on the observed symbol"
                );
            }
        }
        // Any lag ≥ 1 collapses both starts onto the observed path.
        assert!(conditional_tv(&hmm, &y, 0, 1, 1).unwrap() < 1e-6);
        assert!(conditional_tv(&hmm, &y, 0, 1, 3).unwrap() < 1e-6);
    }

    /// Brute-force smoother: enumerate all hidden paths, weight by the exact
    /// joint density of (z-path, fixed y-path) from the stationary start.
    fn brute_force_marginals(hmm: &FiniteHMM, y: &[usize]) -> Vec<Vec<f64>> {
        let m = hmm.n_hidden();
        let l = hmm.n_symbols();
        let t_max = y.len() - 1;
        let lam = stationary(&hmm.joint_chain().unwrap()).unwrap();
        let mut marginals = vec![vec![0.0f64; m]; t_max + 1];
        let mut total = 0.0;
        let n_paths = (m as u64).pow(t_max as u32 + 1);
        for code in 0..n_paths {
            let mut path = Vec::with_capacity(t_max + 1);
            let mut c = code;
            for _ in 0..=t_max {
                path.push((c % m as u64) as usize);
                c /= m as u64;
            }
            let mut w = lam.probs()[path[0] * l + y[0]];
            for t in 1..=t_max {
                w *= hmm.joint_prob(path[t - 1], y[t - 1], path[t], y[t]);
                if w == 0.0 {
                    break;
                }
            }
            if w > 0.0 {
                total += w;
                for (t, &z) in path.iter().enumerate() {
                    marginals[t][z] += w;
                }
            }
        }
        for row in marginals.iter_mut() {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        marginals
    }

    #[test]
    fn conditional_chain_matches_brute_force_smoother() {
        for hmm in
            [fixtures::mixing3_hmm(), fixtures::revealing_hmm(0.05).unwrap(), fixtures::flat_hmm()]
        {
            let (_, y) = simulate(&hmm, 8, 77, 0).unwrap();
            let brute = brute_force_marginals(&hmm, &y);
            let chain = conditional_transitions(&hmm, &y).unwrap();
            let mut mu = chain.initial().to_vec();
            for (a, b) in mu.iter().zip(&brute[0]) {
                assert!((a - b).abs() < 1e-12, "time 0: {a} vs {b}");
            }
            for t in 1..y.len() {
                mu = chain.transition(t).vecmul(&mu);
                for (a, b) in mu.iter().zip(&brute[t]) {
                    assert!((a - b).abs() < 1e-12, "time {t}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn parity_model_never_forgets() {
        let hmm = fixtures::parity_degenerate_hmm();
        assert!(!hmm.nondegenerate());
        let (_, y) = simulate(&hmm, 16, 5, 0).unwrap();
        for n in [1, 4, 8, 12] {
            let tv = conditional_tv(&hmm, &y, 0, 1, n).unwrap();
            assert!(tv >= 1.0, "lag {n}: conditional TV {tv} should stay maximal");
        }
    }

    #[test]
    fn mixing_model_forgets_conditionally() {
        let hmm = fixtures::mixing3_hmm();
        let mut worst20: f64 = 0.0;
        let mut sum20 = 0.0;
        let n_paths = 50;
        for r in 0..n_paths {
            let (_, y) = simulate(&hmm, 28, 900, r).unwrap();
            let mut path_worst: f64 = 0.0;
            for z in 0..3 {
                for z2 in z + 1..3 {
                    path_worst = path_worst.max(conditional_tv(&hmm, &y, z, z2, 20).unwrap());
                }
            }
            worst20 = worst20.max(path_worst);
            sum20 += path_worst;
        }
        let avg20 = sum20 / n_paths as f64;
        assert!(avg20 < 1e-6, "average worst-pair conditional TV at lag 20 is {avg20}");
        assert!(worst20 < 1e-3);
    }

    #[test]
    fn conditional_tv_nonincreasing_in_lag() {
        let hmm = fixtures::mixing3_hmm();
        for r in 0..5 {
            let (_, y) = simulate(&hmm, 20, 31, r).unwrap();
            let mut prev = f64::INFINITY;
            for n in 0..=15 {
                let tv = conditional_tv(&hmm, &y, 0, 2, n).unwrap();
                assert!(tv <= prev + 1e-12, "lag {n}: {tv} after {prev}");
                prev = tv;
            }
        }
    }

    #[test]
    fn conditional_beta_definition_and_decay() {
        let hmm = fixtures::mixing3_hmm();
        let (_, y) = simulate(&hmm, 44, 12, 0).unwrap();
        let chain = conditional_transitions(&hmm, &y).unwrap();
        // n = 0: Σ w(z)·‖δ_z − w‖₁.
        let w = chain.initial();
        let mut expect = 0.0;
        for (z, &wz) in w.iter().enumerate() {
            let mut delta = vec![0.0; w.len()];
            delta[z] = 1.0;
            expect += wz * tv_slices(&delta, w);
        }
        let got = conditional_beta(&hmm, &y, 0).unwrap();
        assert!((got - expect).abs() < 1e-12);
        // Decays along the window and is tiny by lag 30.
        let mut prev = f64::INFINITY;
        for n in [0, 5, 10, 20, 30] {
            let b = conditional_beta(&hmm, &y, n).unwrap();
            assert!(b <= prev + 1e-12);
            prev = b;
        }
        assert!(conditional_beta(&hmm, &y, 30).unwrap() < 1e-6);
    }

    #[test]
    fn conditional_beta_flat_matches_unconditional() {
        let hmm = fixtures::flat_hmm();
        let y = vec![0; 21];
        let base = FiniteChain::new(hmm.p0().clone()).unwrap();
        for n in [0, 1, 3, 7] {
            let got = conditional_beta(&hmm, &y, n).unwrap();
            let expect = crate::markov::beta_mixing_coeff(&base, n as u64).unwrap();
            assert!(
                (got - expect).abs() < 1e-10,
                "lag {n}: conditional {got} vs unconditional {expect}"
            );
        }
    }

    #[test]
    fn margin_is_enforced() {
        let hmm = fixtures::mixing3_hmm();
        let y = vec![0; 21]; // T = 20, margin 5, usable lags ≤ 15.
        assert!(conditional_tv(&hmm, &y, 0, 1, 15).is_ok());
        let err = conditional_tv(&hmm, &y, 0, 1, 16).unwrap_err();
        assert!(err.to_string().contains("margin"));
    }

    #[test]
    fn truncation_stable_under_window_doubling() {
        let hmm = fixtures::mixing3_hmm();
        let (_, y_long) = simulate(&hmm, 60, 4, 0).unwrap();
        let y_short = &y_long[..31];
        for n in [1, 5, 10, 20] {
            let a = conditional_tv(&hmm, y_short, 0, 1, n).unwrap();
            let b = conditional_tv(&hmm, &y_long, 0, 1, n).unwrap();
            assert!(
                (a - b).abs() < 1e-8,
                "lag {n}: window tail changed the value by {}",
                (a - b).abs()
            );
        }
    }

    #[test]
    fn simulate_is_deterministic_and_stationary() {
        let hmm = fixtures::mixing3_hmm();
        let (z1, y1) = simulate(&hmm, 50, 11, 3).unwrap();
        let (z2, y2) = simulate(&hmm, 50, 11, 3).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(y1, y2);
        assert_ne!(simulate(&hmm, 50, 12, 3).unwrap().1, y1);

        // Empirical hidden-state frequencies vs the stationary marginal,
        // with batch means absorbing the serial correlation.
        let t_len = 100_000;
        let (z, _) = simulate(&hmm, t_len, 8, 0).unwrap();
        let lam = stationary(&hmm.joint_chain().unwrap()).unwrap();
        let mut z_marginal = vec![0.0; 3];
        for (i, &p) in lam.probs().iter().enumerate() {
            z_marginal[i / 3] += p;
        }
        let n_batches = 100;
        let batch = z.len() / n_batches;
        for state in 0..3 {
            let means: Vec<f64> = (0..n_batches)
                .map(|b| {
                    z[b * batch..(b + 1) * batch]
                        .iter()
                        .filter(|&&v| v == state)
                        .count() as f64
                        / batch as f64
                })
                .collect();
            let grand: f64 = means.iter().sum::<f64>() / n_batches as f64;
            let var: f64 =
                means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (n_batches - 1) as f64;
            let se = (var / n_batches as f64).sqrt();
            assert!(
                (grand - z_marginal[state]).abs() < 3.0 * se.max(1e-4),
                "state {state}: {grand} vs {} (se {se})",
                z_marginal[state]
            );
        }
    }

    #[test]
    fn inheritance_contrast_between_fixtures() {
        let lags = [0, 5, 10, 15, 20, 25, 30];
        let good = inheritance_experiment(&fixtures::mixing3_hmm(), 20, 40, &lags, 2024).unwrap();
        for i in 1..good.lags.len() {
            assert!(
                good.max_tv[i] <= good.max_tv[i - 1] + 1e-12,
                "max column must be nonincreasing"
            );
            assert!(good.mean_tv[i] <= good.mean_tv[i - 1] + 1e-12);
        }
        assert!(good.max_tv.last().unwrap() < &1e-3);

        let bad =
            inheritance_experiment(&fixtures::parity_degenerate_hmm(), 20, 40, &lags, 2024)
                .unwrap();
        for (i, &lag) in bad.lags.iter().enumerate() {
            assert!(
                bad.max_tv[i] >= 1.0,
                "parity model must not forget (lag {lag}: {})",
                bad.max_tv[i]
            );
        }
    }
}
