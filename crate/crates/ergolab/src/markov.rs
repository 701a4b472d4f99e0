//! Finite-state Markov chains and exact mixing diagnostics on their
//! projections.
//!
//! A projected chain is generally not Markov, so distances between its path
//! laws are computed by exact per-string forward recursions over windows
//! `(Y_n, ..., Y_{n+k})`. The central dichotomy probed here: under a
//! measurable projection the worst-pair window TV either falls strictly below
//! 2 at some finite time (local irreducibility) or stays pinned at 2 forever.

use crate::linalg::Mat;
use crate::measure::{tv_slices, Categorical};
use crate::{Error, Result, PROB_TOL};
use nalgebra::{DMatrix, DVector};

/// Residual tolerance for a stationary vector: `‖λP − λ‖₁ ≤ 1e-10`.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Path-law weights must sum to 1 within this tolerance.
pub const PATH_LAW_TOL: f64 = 1e-10;

/// Maximum number of symbol strings a path-law enumeration may touch.
pub const ENUM_CAP: usize = 200_000;

/// Maximum realized product state count.
pub const PRODUCT_CAP: usize = 4096;

/// Window-growth heuristic: stop extending k once successive window TVs
/// differ by less than this.
pub const K_CONVERGENCE_TOL: f64 = 1e-6;

/// Row-stochastic transition matrix, optionally carrying a verified
/// stationary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    p: Mat,
    stationary: Option<Categorical>,
}

impl FiniteChain {
    pub fn new(p: Mat) -> Result<Self> {
        if p.rows != p.cols {
            return Err(Error::Dimension(format!(
                "transition matrix is {}x{}, must be square",
                p.rows, p.cols
            )));
        }
        for i in 0..p.rows {
            let mut sum = 0.0;
            for j in 0..p.cols {
                let v = p.get(i, j);
                if !(v >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "transition probability P({i},{j}) = {v} is negative"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidInput(format!(
                    "row {i} sums to {sum}, not 1 within {PROB_TOL}"
                )));
            }
        }
        Ok(FiniteChain { p, stationary: None })
    }

    /// Attach a caller-supplied stationary vector after verifying its
    /// residual.
    pub fn with_stationary(p: Mat, lam: Categorical) -> Result<Self> {
        let chain = FiniteChain::new(p)?;
        if lam.len() != chain.n_states() {
            return Err(Error::Dimension(format!(
                "stationary vector has {} entries for {} states",
                lam.len(),
                chain.n_states()
            )));
        }
        let image = chain.p.vecmul(lam.probs());
        let residual = tv_slices(&image, lam.probs());
        if residual > STATIONARY_TOL {
            return Err(Error::InvalidInput(format!(
                "claimed stationary vector has residual {residual:.3e} > {STATIONARY_TOL:.0e}"
            )));
        }
        Ok(FiniteChain { p: chain.p, stationary: Some(lam) })
    }

    pub fn n_states(&self) -> usize {
        self.p.rows
    }

    pub fn p(&self) -> &Mat {
        &self.p
    }

    pub fn stationary_hint(&self) -> Option<&Categorical> {
        self.stationary.as_ref()
    }

    /// One step of the distribution flow: `mu P`.
    pub fn step_distribution(&self, mu: &[f64]) -> Vec<f64> {
        self.p.vecmul(mu)
    }
}

/// Total map from state indices to observation symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    map: Vec<usize>,
    alphabet_size: usize,
}

impl Projection {
    pub fn new(map: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::InvalidInput("projection alphabet must be nonempty".into()));
        }
        if map.is_empty() {
            return Err(Error::InvalidInput("projection must cover at least one state".into()));
        }
        for (x, &y) in map.iter().enumerate() {
            if y >= alphabet_size {
                return Err(Error::InvalidInput(format!(
                    "state {x} maps to symbol {y}, outside alphabet of size {alphabet_size}"
                )));
            }
        }
        Ok(Projection { map, alphabet_size })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Projection::new((0..n).collect(), n)
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn n_states(&self) -> usize {
        self.map.len()
    }

    pub fn apply(&self, state: usize) -> usize {
        self.map[state]
    }
}

/// Independent product of finite chains, realized on the product state space
/// on demand. Coordinate 0 is the most significant digit of the mixed-radix
/// state index.
#[derive(Debug, Clone)]
pub struct ProductChain {
    components: Vec<FiniteChain>,
}

impl ProductChain {
    pub fn new(components: Vec<FiniteChain>) -> Result<Self> {
        Self::with_cap(components, PRODUCT_CAP)
    }

    pub fn with_cap(components: Vec<FiniteChain>, cap: usize) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("product chain needs at least one component".into()));
        }
        let mut total: usize = 1;
        for c in &components {
            total = total.checked_mul(c.n_states()).unwrap_or(usize::MAX);
            if total > cap {
                return Err(Error::CapExceeded(format!(
                    "product state count exceeds cap {cap}"
                )));
            }
        }
        Ok(ProductChain { components })
    }

    pub fn components(&self) -> &[FiniteChain] {
        &self.components
    }

    pub fn n_states(&self) -> usize {
        self.components.iter().map(|c| c.n_states()).product()
    }

    /// Decode a product state index into per-coordinate states.
    pub fn decode(&self, mut state: usize) -> Vec<usize> {
        let mut coords = vec![0usize; self.components.len()];
        for (i, c) in self.components.iter().enumerate().rev() {
            coords[i] = state % c.n_states();
            state /= c.n_states();
        }
        coords
    }

    /// Encode per-coordinate states into a product state index.
    pub fn encode(&self, coords: &[usize]) -> usize {
        let mut state = 0usize;
        for (i, c) in self.components.iter().enumerate() {
            state = state * c.n_states() + coords[i];
        }
        state
    }

    /// Materialize the product transition matrix.
    pub fn realize(&self) -> Result<FiniteChain> {
        let n = self.n_states();
        let mut p = Mat::zeros(n, n);
        for from in 0..n {
            let fc = self.decode(from);
            for to in 0..n {
                let tc = self.decode(to);
                let mut prob = 1.0;
                for (i, c) in self.components.iter().enumerate() {
                    prob *= c.p().get(fc[i], tc[i]);
                    if prob == 0.0 {
                        break;
                    }
                }
                p.set(from, to, prob);
            }
        }
        // Row sums are products of per-component row sums, so they can drift
        // by a few ulps; renormalize to keep the stochasticity invariant
        // exact.
        for i in 0..n {
            let sum: f64 = p.row(i).iter().sum();
            for j in 0..n {
                p.set(i, j, p.get(i, j) / sum);
            }
        }
        FiniteChain::new(p)
    }

    /// Projection of the realized chain onto the coordinates in `coords`
    /// (deduplicated, order-insensitive). An empty set projects to the
    /// one-symbol alphabet.
    pub fn coordinate_projection(&self, coords: &[usize]) -> Result<Projection> {
        let mut picked: Vec<usize> = coords.to_vec();
        picked.sort_unstable();
        picked.dedup();
        if let Some(&bad) = picked.iter().find(|&&c| c >= self.components.len()) {
            return Err(Error::InvalidInput(format!(
                "coordinate {bad} out of range for {} components",
                self.components.len()
            )));
        }
        let n = self.n_states();
        let alphabet: usize = picked.iter().map(|&c| self.components[c].n_states()).product();
        let mut map = Vec::with_capacity(n);
        for state in 0..n {
            let full = self.decode(state);
            let mut symbol = 0usize;
            for &c in &picked {
                symbol = symbol * self.components[c].n_states() + full[c];
            }
            map.push(symbol);
        }
        Projection::new(map, alphabet.max(1))
    }
}

/// Exact law of a projected window `(Y_n, ..., Y_{n+k})`: symbol strings with
/// their probabilities, lexicographically sorted, zero-probability strings
/// omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    strings: Vec<(Vec<usize>, f64)>,
}

impl PathLaw {
    pub fn new(strings: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let total: f64 = strings.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PATH_LAW_TOL {
            return Err(Error::InvalidInput(format!(
                "path-law weights sum to {total}, not 1 within {PATH_LAW_TOL}"
            )));
        }
        Ok(PathLaw { strings })
    }

    pub fn strings(&self) -> &[(Vec<usize>, f64)] {
        &self.strings
    }

    pub fn prob(&self, s: &[usize]) -> f64 {
        self.strings
            .binary_search_by(|(t, _)| t.as_slice().cmp(s))
            .map(|i| self.strings[i].1)
            .unwrap_or(0.0)
    }

    pub fn window_len(&self) -> usize {
        self.strings.first().map(|(s, _)| s.len()).unwrap_or(0)
    }
}

fn check_enum_cap(alphabet: usize, k: usize) -> Result<()> {
    let strings = (alphabet as f64).powi(k as i32 + 1);
    if strings > ENUM_CAP as f64 {
        return Err(Error::CapExceeded(format!(
            "window enumeration needs {strings:.0} strings (alphabet {alphabet}, window {}), \
             above the cap {ENUM_CAP}",
            k + 1
        )));
    }
    Ok(())
}

/// Largest window parameter k ≤ `k_max` whose enumeration fits the cap.
fn clamp_k(alphabet: usize, k_max: usize) -> usize {
    let mut k = 0usize;
    while k < k_max && (alphabet as f64).powi(k as i32 + 2) <= ENUM_CAP as f64 {
        k += 1;
    }
    k
}

fn check_alignment(chain: &FiniteChain, proj: &Projection) -> Result<()> {
    if proj.n_states() != chain.n_states() {
        return Err(Error::Dimension(format!(
            "projection covers {} states, chain has {}",
            proj.n_states(),
            chain.n_states()
        )));
    }
    Ok(())
}

fn advance(chain: &FiniteChain, init: &[f64], n: usize) -> Vec<f64> {
    let mut mu = init.to_vec();
    for _ in 0..n {
        mu = chain.step_distribution(&mu);
    }
    mu
}

/// Exact law of `(Y_n, ..., Y_{n+k})` where `Y_t` is the projection of the
/// chain state at time t, started from `init`.
pub fn projected_path_law(
    chain: &FiniteChain,
    init: &Categorical,
    proj: &Projection,
    n: usize,
    k: usize,
) -> Result<PathLaw> {
    check_alignment(chain, proj)?;
    if init.len() != chain.n_states() {
        return Err(Error::Dimension(format!(
            "initial law has {} entries for {} states",
            init.len(),
            chain.n_states()
        )));
    }
    check_enum_cap(proj.alphabet_size(), k)?;

    let mu = advance(chain, init.probs(), n);
    let states_of = symbol_classes(proj);
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut prefix = Vec::with_capacity(k + 1);

    // Depth-first over symbol strings, carrying the constrained forward
    // vector alpha(x) = P[state = x, window prefix observed].
    fn dfs(
        chain: &FiniteChain,
        states_of: &[Vec<usize>],
        alpha: &[f64],
        depth: usize,
        k: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if depth == k {
            let mass: f64 = alpha.iter().sum();
            if mass > 0.0 {
                out.push((prefix.clone(), mass));
            }
            return;
        }
        for (y, members) in states_of.iter().enumerate() {
            let mut child = vec![0.0; alpha.len()];
            let mut mass = 0.0;
            for &xp in members {
                let mut acc = 0.0;
                for (x, &a) in alpha.iter().enumerate() {
                    if a > 0.0 {
                        acc += a * chain.p().get(x, xp);
                    }
                }
                child[xp] = acc;
                mass += acc;
            }
            if mass > 0.0 {
                prefix.push(y);
                dfs(chain, states_of, &child, depth + 1, k, prefix, out);
                prefix.pop();
            }
        }
    }

    for (y, members) in states_of.iter().enumerate() {
        let mut alpha = vec![0.0; chain.n_states()];
        let mut mass = 0.0;
        for &x in members {
            alpha[x] = mu[x];
            mass += mu[x];
        }
        if mass > 0.0 {
            prefix.push(y);
            dfs(chain, &states_of, &alpha, 0, k, &mut prefix, &mut out);
            prefix.pop();
        }
    }
    PathLaw::new(out)
}

fn symbol_classes(proj: &Projection) -> Vec<Vec<usize>> {
    let mut states_of = vec![Vec::new(); proj.alphabet_size()];
    for (x, &y) in proj.map().iter().enumerate() {
        states_of[y].push(x);
    }
    states_of
}

/// TV between projected windows `(Y_n, ..., Y_{n+j})` for every `j = 0..=k`,
/// computed in one pass under two initial laws. Entry j is nondecreasing
/// in j.
pub fn path_tv_profile(
    chain: &FiniteChain,
    init_a: &[f64],
    init_b: &[f64],
    proj: &Projection,
    n: usize,
    k: usize,
) -> Result<Vec<f64>> {
    check_alignment(chain, proj)?;
    check_enum_cap(proj.alphabet_size(), k)?;
    let mu = advance(chain, init_a, n);
    let nu = advance(chain, init_b, n);
    let states_of = symbol_classes(proj);
    let mut profile = vec![0.0; k + 1];

    fn dfs(
        chain: &FiniteChain,
        states_of: &[Vec<usize>],
        a: &[f64],
        b: &[f64],
        depth: usize,
        k: usize,
        profile: &mut [f64],
    ) {
        let ma: f64 = a.iter().sum();
        let mb: f64 = b.iter().sum();
        profile[depth] += (ma - mb).abs();
        if depth == k || (ma == 0.0 && mb == 0.0) {
            // A dead prefix contributes its (constant) gap to all deeper
            // windows.
            for d in depth + 1..=k {
                profile[d] += (ma - mb).abs();
            }
            return;
        }
        for members in states_of.iter() {
            let mut ca = vec![0.0; a.len()];
            let mut cb = vec![0.0; b.len()];
            let mut mass = 0.0;
            for &xp in members {
                let (mut acc_a, mut acc_b) = (0.0, 0.0);
                for x in 0..a.len() {
                    let p = chain.p().get(x, xp);
                    if p > 0.0 {
                        acc_a += a[x] * p;
                        acc_b += b[x] * p;
                    }
                }
                ca[xp] = acc_a;
                cb[xp] = acc_b;
                mass += acc_a + acc_b;
            }
            if mass > 0.0 {
                dfs(chain, states_of, &ca, &cb, depth + 1, k, profile);
            }
        }
    }

    for members in states_of.iter() {
        let mut a = vec![0.0; chain.n_states()];
        let mut b = vec![0.0; chain.n_states()];
        let mut mass = 0.0;
        for &x in members {
            a[x] = mu[x];
            b[x] = nu[x];
            mass += mu[x] + nu[x];
        }
        if mass > 0.0 {
            dfs(chain, &states_of, &a, &b, 0, k, &mut profile);
        }
    }
    Ok(profile)
}

/// TV between the projected windows `(Y_n, ..., Y_{n+k})` started from the
/// point masses at states `x` and `x2`.
pub fn local_path_tv(
    chain: &FiniteChain,
    x: usize,
    x2: usize,
    proj: &Projection,
    n: usize,
    k: usize,
) -> Result<f64> {
    let ns = chain.n_states();
    if x >= ns || x2 >= ns {
        return Err(Error::InvalidInput(format!(
            "initial states {x}, {x2} must lie below {ns}"
        )));
    }
    let mut a = vec![0.0; ns];
    let mut b = vec![0.0; ns];
    a[x] = 1.0;
    b[x2] = 1.0;
    let profile = path_tv_profile(chain, &a, &b, proj, n, k)?;
    Ok(profile[k])
}

/// Unique stationary vector of the chain, by closed-class detection plus a
/// direct linear solve. Fails listing the classes when more than one closed
/// communicating class exists.
pub fn stationary(chain: &FiniteChain) -> Result<Categorical> {
    if let Some(lam) = chain.stationary_hint() {
        return Ok(lam.clone());
    }
    let n = chain.n_states();
    let sccs = strongly_connected_components(chain);
    let mut closed: Vec<&Vec<usize>> = Vec::new();
    for scc in &sccs {
        let is_closed = scc.iter().all(|&x| {
            (0..n).all(|y| chain.p().get(x, y) == 0.0 || scc.contains(&y))
        });
        if is_closed {
            closed.push(scc);
        }
    }
    if closed.len() != 1 {
        let classes: Vec<String> = closed
            .iter()
            .map(|c| {
                let mut ids = (*c).clone();
                ids.sort_unstable();
                format!("{{{}}}", ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "))
            })
            .collect();
        return Err(Error::MultipleErgodicClasses(format!(
            "found {} closed ergodic classes: {}",
            closed.len(),
            classes.join(", ")
        )));
    }
    let class = {
        let mut c = closed[0].clone();
        c.sort_unstable();
        c
    };
    let m = class.len();
    // Solve λ(P−I) = 0 on the closed class with Σλ = 1: transpose system
    // (Pᵀ−I)x = 0, last row replaced by the normalization.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            let mut v = chain.p().get(sj, si);
            if i == j {
                v -= 1.0;
            }
            a[(i, j)] = v;
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("stationary system is singular".into()))?;

    let mut lam = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        lam[s] = x[i].max(0.0);
    }
    let total: f64 = lam.iter().sum();
    for v in lam.iter_mut() {
        *v /= total;
    }
    let image = chain.p().vecmul(&lam);
    let residual = tv_slices(&image, &lam);
    if residual > STATIONARY_TOL {
        return Err(Error::Solver(format!(
            "stationary solve residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}"
        )));
    }
    Categorical::new(lam)
}

fn strongly_connected_components(chain: &FiniteChain) -> Vec<Vec<usize>> {
    // Iterative Tarjan on the positive-probability adjacency structure.
    let n = chain.n_states();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|x| (0..n).filter(|&y| chain.p().get(x, y) > 0.0).collect())
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut sccs: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut ci)) = call.last_mut() {
            if *ci == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ci < adj[v].len() {
                let w = adj[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    sccs.push(comp);
                }
                call.pop();
                if let Some(&mut (parent, _)) = call.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    sccs
}

/// Absolute-regularity coefficient `β(n) = Σ_x λ(x) ‖δ_x Pⁿ − λ‖₁`, using the
/// chain's attached stationary vector or computing one.
pub fn beta_mixing_coeff(chain: &FiniteChain, n: u64) -> Result<f64> {
    let lam = stationary(chain)?;
    let pn = chain.p().pow(n);
    let mut beta = 0.0;
    for (x, &w) in lam.probs().iter().enumerate() {
        if w > 0.0 {
            beta += w * tv_slices(pn.row(x), lam.probs());
        }
    }
    Ok(beta)
}

/// Outcome of a zero-two probe.
#[derive(Debug, Clone)]
pub struct ZeroTwoReport {
    /// True when every ordered pair of initial states reached window TV
    /// ≤ 2 − alpha by some n ≤ n_max.
    pub locally_irreducible: bool,
    /// First n at which the worst pair satisfied the threshold.
    pub witness_n: Option<usize>,
    /// Worst-pair window TV for n = 0..=n_max.
    pub tv_trace: Vec<f64>,
    /// Window parameter k actually used (k_max clamped to the enumeration
    /// cap).
    pub k_used: usize,
}

/// Searches n ≤ n_max for worst-pair projected window TV ≤ 2 − alpha. The
/// window grows to `k_max`, clamped so the enumeration cap is respected, and
/// stops early once successive window TVs differ by less than 1e-6 (the
/// window TV is nondecreasing in k, so an early plateau is conclusive at
/// that tolerance).
pub fn zero_two_probe(
    chain: &FiniteChain,
    proj: &Projection,
    n_max: usize,
    k_max: usize,
    alpha: f64,
) -> Result<ZeroTwoReport> {
    check_alignment(chain, proj)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidInput(format!(
            "threshold alpha = {alpha} must lie in (0, 2]"
        )));
    }
    let k_used = clamp_k(proj.alphabet_size(), k_max);
    let ns = chain.n_states();
    let mut trace = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut worst: f64 = 0.0;
        for x in 0..ns {
            for x2 in x + 1..ns {
                let mut a = vec![0.0; ns];
                let mut b = vec![0.0; ns];
                a[x] = 1.0;
                b[x2] = 1.0;
                let profile = path_tv_profile(chain, &a, &b, proj, n, k_used)?;
                let mut value = profile[0];
                for j in 1..profile.len() {
                    if (profile[j] - profile[j - 1]).abs() < K_CONVERGENCE_TOL {
                        value = profile[j];
                        break;
                    }
                    value = profile[j];
                }
                worst = worst.max(value);
            }
        }
        trace.push(worst);
    }
    let witness_n = trace.iter().position(|&v| v <= 2.0 - alpha);
    Ok(ZeroTwoReport {
        locally_irreducible: witness_n.is_some(),
        witness_n,
        tv_trace: trace,
        k_used,
    })
}

/// Zero-two probe of an independent product chain observed through a
/// coordinate window, together with the unprojected chain's TV decay for
/// contrast: locally the worst pair mixes fast, while the full product keeps
/// a much larger distance at small n (exactly 2 in the infinite-product
/// limit this models).
#[derive(Debug, Clone)]
pub struct LocalMixingReport {
    pub local: ZeroTwoReport,
    /// Worst-pair marginal TV of the full product chain for n = 0..=n_max.
    pub full_max_pair_trace: Vec<f64>,
    /// TV between the all-last-coordinates start and the stationary law, for
    /// n = 0..=n_max.
    pub full_vs_stationary_trace: Vec<f64>,
}

pub fn local_mixing_probe(
    product: &ProductChain,
    coords: &[usize],
    n_max: usize,
    k_max: usize,
    alpha: f64,
) -> Result<LocalMixingReport> {
    let chain = product.realize()?;
    let proj = product.coordinate_projection(coords)?;
    let local = zero_two_probe(&chain, &proj, n_max, k_max, alpha)?;

    let n = chain.n_states();
    let lam = stationary(&chain)?;
    let extreme = n - 1;
    let mut full_max_pair = Vec::with_capacity(n_max + 1);
    let mut full_vs_stationary = Vec::with_capacity(n_max + 1);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            let mut v = vec![0.0; n];
            v[x] = 1.0;
            v
        })
        .collect();
    for _ in 0..=n_max {
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for x2 in x + 1..n {
                worst = worst.max(tv_slices(&rows[x], &rows[x2]));
            }
        }
        full_max_pair.push(worst);
        full_vs_stationary.push(tv_slices(&rows[extreme], lam.probs()));
        rows = rows.iter().map(|r| chain.step_distribution(r)).collect();
    }
    Ok(LocalMixingReport { local, full_max_pair_trace: full_max_pair, full_vs_stationary_trace: full_vs_stationary })
}
