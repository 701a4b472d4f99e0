//! Two-dimensional Navier–Stokes vorticity dynamics on the torus, spectrally
//! truncated to a desk-scale grid, with degenerate stochastic forcing on a
//! small symmetric mode set and noisy velocity observations at fixed points.
//!
//! Scheme: Crank–Nicolson for the viscous term, explicit pseudo-spectral
//! nonlinear term with the 2/3 dealiasing rule (so retained-mode products are
//! the exact Galerkin convolution and conserve energy), forcing injected per
//! conjugate mode pair. Reality of the field is enforced exactly every step.

use crate::filter::ParticleModel;
use crate::measure::MetricSpec;
use crate::rng::Stream;
use crate::{Error, Result};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Explicit-term stability guard: h·max|u|·k_cutoff must stay below this.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Clone)]
pub struct NSModel {
    grid: usize,
    cutoff: i32,
    nu: f64,
    /// Forced conjugate-pair representatives with amplitudes; the mirrored
    /// modes receive the conjugate noise.
    forced_reps: Vec<((i32, i32), f64)>,
    /// Full signed forced set, for reporting and energy bookkeeping.
    forced_all: Vec<((i32, i32), f64)>,
    h: f64,
    steps_per_sample: usize,
    obs_points: Vec<(f64, f64)>,
    obs_var: f64,
    /// Retained nonzero modes, conjugate-pair representatives, lex order.
    reps: Vec<(i32, i32)>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for NSModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NSModel")
            .field("grid", &self.grid)
            .field("cutoff", &self.cutoff)
            .field("nu", &self.nu)
            .field("forced", &self.forced_all)
            .field("h", &self.h)
            .field("steps_per_sample", &self.steps_per_sample)
            .field("obs_points", &self.obs_points)
            .field("obs_var", &self.obs_var)
            .finish()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn is_rep(k: (i32, i32)) -> bool {
    k.0 > 0 || (k.0 == 0 && k.1 > 0)
}

impl NSModel {
    pub fn new(
        grid: usize,
        nu: f64,
        forced: Vec<((i32, i32), f64)>,
        h: f64,
        sample_interval: f64,
        obs_points: Vec<(f64, f64)>,
        obs_var: f64,
    ) -> Result<Self> {
        if grid < 8 || !grid.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid {grid} must be a power of two, at least 8"
            )));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidInput(format!("viscosity {nu} must be positive")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("inner step {h} must be positive")));
        }
        let sratio = sample_interval / h;
        if (sratio - sratio.round()).abs() > 1e-9 || sratio.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "sample_interval/h = {sratio} must be a positive integer"
            )));
        }
        if obs_points.is_empty() {
            return Err(Error::InvalidInput("need at least one observation point".into()));
        }
        if !(obs_var > 0.0) {
            return Err(Error::InvalidInput(format!(
                "observation variance {obs_var} must be positive"
            )));
        }
        let cutoff = (grid as i32) / 3;

        // --- forcing-set assumptions, checked at construction ---
        if forced.is_empty() {
            return Err(Error::InvalidInput("forcing set must be nonempty".into()));
        }
        for &((k1, k2), s) in &forced {
            if (k1, k2) == (0, 0) {
                return Err(Error::InvalidInput("forcing the zero mode is not allowed".into()));
            }
            if k1.abs() > cutoff || k2.abs() > cutoff {
                return Err(Error::InvalidInput(format!(
                    "forced mode ({k1},{k2}) lies outside the retained set |k_i| <= {cutoff}"
                )));
            }
            if !(s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "forcing amplitude {s} on ({k1},{k2}) must be positive"
                )));
            }
        }
        // Symmetry: the set equals its negation, with matching amplitudes.
        for &((k1, k2), s) in &forced {
            match forced.iter().find(|&&(m, _)| m == (-k1, -k2)) {
                None => {
                    return Err(Error::InvalidInput(format!(
                        "forcing set must be symmetric: missing ({},{}) to mirror ({k1},{k2})",
                        -k1, -k2
                    )))
                }
                Some(&(_, s2)) if (s - s2).abs() > 1e-12 => {
                    return Err(Error::InvalidInput(format!(
                        "mirrored forcing amplitudes differ on ({k1},{k2}): {s} vs {s2}"
                    )))
                }
                _ => {}
            }
        }
        // Integer combinations generate the full lattice: the subgroup of Z²
        // spanned by the set is Z² iff the gcd of all coordinates is 1 and
        // the gcd of all pairwise determinants is 1.
        let g_coord = forced
            .iter()
            .flat_map(|&((a, b), _)| [a as i64, b as i64])
            .fold(0i64, gcd);
        let mut g_det = 0i64;
        for (i, &((a1, b1), _)) in forced.iter().enumerate() {
            for &((a2, b2), _) in &forced[i + 1..] {
                g_det = gcd(g_det, (a1 as i64) * (b2 as i64) - (b1 as i64) * (a2 as i64));
            }
        }
        if g_coord != 1 || g_det != 1 {
            return Err(Error::InvalidInput(format!(
                "forcing set does not generate the integer lattice \
                 (coordinate gcd {g_coord}, determinant gcd {g_det}; both must be 1)"
            )));
        }
        // Two forced modes of different magnitude.
        let mags: Vec<i64> = forced
            .iter()
            .map(|&((a, b), _)| (a as i64) * (a as i64) + (b as i64) * (b as i64))
            .collect();
        if mags.iter().all(|&m| m == mags[0]) {
            return Err(Error::InvalidInput(
                "forcing set needs two modes with different magnitudes".into(),
            ));
        }

        let mut forced_reps: Vec<((i32, i32), f64)> =
            forced.iter().copied().filter(|&(k, _)| is_rep(k)).collect();
        forced_reps.sort_by_key(|&(k, _)| k);
        let mut forced_all = forced;
        forced_all.sort_by_key(|&(k, _)| k);

        let mut reps = Vec::new();
        for k1 in -cutoff..=cutoff {
            for k2 in -cutoff..=cutoff {
                if is_rep((k1, k2)) {
                    reps.push((k1, k2));
                }
            }
        }

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid);
        let inv = planner.plan_fft_inverse(grid);

        Ok(NSModel {
            grid,
            cutoff,
            nu,
            forced_reps,
            forced_all,
            h,
            steps_per_sample: sratio.round() as usize,
            obs_points,
            obs_var,
            reps,
            fwd,
            inv,
        })
    }

    /// Desk-scale defaults: 16×16 grid (retained |k_i| ≤ 5), ν = 0.5, the
    /// minimal symmetric lattice-generating forced set with two magnitudes,
    /// unit amplitudes, inner step 0.005, sampled every 0.05.
    pub fn default_desk() -> Self {
        let forced = vec![
            ((1, 0), 1.0),
            ((-1, 0), 1.0),
            ((0, 1), 1.0),
            ((0, -1), 1.0),
            ((1, 1), 1.0),
            ((-1, -1), 1.0),
        ];
        NSModel::new(16, 0.5, forced, 0.005, 0.05, vec![(1.0, 2.0), (4.0, 1.5)], 0.04).unwrap()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn cutoff(&self) -> i32 {
        self.cutoff
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn steps_per_sample(&self) -> usize {
        self.steps_per_sample
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    pub fn forced(&self) -> &[((i32, i32), f64)] {
        &self.forced_all
    }

    /// Total energy injection rate Σ_𝒵 σ_k².
    pub fn injection_rate(&self) -> f64 {
        self.forced_all.iter().map(|&(_, s)| s * s).sum()
    }

    /// Number of packed state coordinates (re, im per representative mode).
    pub fn state_len(&self) -> usize {
        2 * self.reps.len()
    }

    /// Number of noise variates one inner step consumes.
    pub fn noise_len(&self) -> usize {
        2 * self.forced_reps.len()
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.state_len()]
    }

    fn rep_index(&self, k: (i32, i32)) -> Option<usize> {
        self.reps.binary_search(&k).ok()
    }

    /// State with field amplitude·cos(k·z): coefficients amplitude/2 on ±k.
    pub fn single_mode_state(&self, k: (i32, i32), amplitude: f64) -> Result<Vec<f64>> {
        let rep = if is_rep(k) { k } else { (-k.0, -k.1) };
        let idx = self.rep_index(rep).ok_or_else(|| {
            Error::InvalidInput(format!("mode ({},{}) outside the retained set", k.0, k.1))
        })?;
        let mut state = self.zero_state();
        state[2 * idx] = amplitude / 2.0;
        Ok(state)
    }

    /// Complex coefficient of mode k (any sign) in a packed state.
    pub fn mode_coefficient(&self, state: &[f64], k: (i32, i32)) -> Result<Complex<f64>> {
        if is_rep(k) {
            let idx = self.rep_index(k).ok_or_else(|| {
                Error::InvalidInput(format!("mode ({},{}) outside the retained set", k.0, k.1))
            })?;
            Ok(Complex::new(state[2 * idx], state[2 * idx + 1]))
        } else {
            let idx = self.rep_index((-k.0, -k.1)).ok_or_else(|| {
                Error::InvalidInput(format!("mode ({},{}) outside the retained set", k.0, k.1))
            })?;
            Ok(Complex::new(state[2 * idx], -state[2 * idx + 1]))
        }
    }

    /// Energy Σ_k |c_k|² over all signed retained modes.
    pub fn energy(&self, state: &[f64]) -> f64 {
        (0..self.reps.len())
            .map(|i| 2.0 * (state[2 * i] * state[2 * i] + state[2 * i + 1] * state[2 * i + 1]))
            .sum()
    }

    /// First-order energy Σ_k |k|²·|c_k|².
    pub fn h1_energy(&self, state: &[f64]) -> f64 {
        self.reps
            .iter()
            .enumerate()
            .map(|(i, &(k1, k2))| {
                let k2norm = (k1 * k1 + k2 * k2) as f64;
                2.0 * k2norm * (state[2 * i] * state[2 * i] + state[2 * i + 1] * state[2 * i + 1])
            })
            .sum()
    }

    /// H¹ distance between packed states — the coupling metric.
    pub fn h1_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.h1_energy(&diff).sqrt()
    }

    /// L² distance between packed states.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.energy(&diff).sqrt()
    }

    fn bin(&self, f: i32) -> usize {
        f.rem_euclid(self.grid as i32) as usize
    }

    /// Unpack to a full spectral grid (row = first index).
    fn to_grid(&self, state: &[f64]) -> Vec<Complex<f64>> {
        let n = self.grid;
        let mut g = vec![Complex::new(0.0, 0.0); n * n];
        for (i, &(k1, k2)) in self.reps.iter().enumerate() {
            let c = Complex::new(state[2 * i], state[2 * i + 1]);
            g[self.bin(k1) * n + self.bin(k2)] = c;
            g[self.bin(-k1) * n + self.bin(-k2)] = c.conj();
        }
        g
    }

    /// In-place 2D FFT over the n×n grid.
    fn fft2(&self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.grid;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        // Transpose, transform rows, transpose back.
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    /// Real-space samples of a spectral grid.
    fn synthesize(&self, spectral: &[Complex<f64>]) -> Vec<f64> {
        let mut g = spectral.to_vec();
        self.fft2(&mut g, true);
        g.iter().map(|c| c.re).collect()
    }

    /// Velocity spectral grids (û₁, û₂) from the vorticity grid:
    /// û = −i·k^⊥/|k|²·v̂ with k^⊥ = (−k₂, k₁).
    fn velocity_grids(&self, vhat: &[Complex<f64>]) -> (Vec<Complex<f64>>, Vec<Complex<f64>>) {
        let n = self.grid;
        let mut u1 = vec![Complex::new(0.0, 0.0); n * n];
        let mut u2 = vec![Complex::new(0.0, 0.0); n * n];
        let i_unit = Complex::new(0.0, 1.0);
        for &(k1, k2) in &self.reps {
            for &(a, b) in &[(k1, k2), (-k1, -k2)] {
                let idx = self.bin(a) * n + self.bin(b);
                let c = vhat[idx];
                let k2norm = (a * a + b * b) as f64;
                // û₁ = i·k₂/|k|²·v̂, û₂ = −i·k₁/|k|²·v̂.
                u1[idx] = i_unit * (b as f64 / k2norm) * c;
                u2[idx] = -i_unit * (a as f64 / k2norm) * c;
            }
        }
        (u1, u2)
    }

    /// Nonlinear term N_k = −(u·∇v)^_k on the retained modes, packed, plus
    /// the maximal advecting speed for the CFL guard.
    fn nonlinear(&self, state: &[f64]) -> (Vec<f64>, f64) {
        let n = self.grid;
        let vhat = self.to_grid(state);
        let (u1hat, u2hat) = self.velocity_grids(&vhat);
        let mut d1 = vec![Complex::new(0.0, 0.0); n * n];
        let mut d2 = vec![Complex::new(0.0, 0.0); n * n];
        let i_unit = Complex::new(0.0, 1.0);
        for &(k1, k2) in &self.reps {
            for &(a, b) in &[(k1, k2), (-k1, -k2)] {
                let idx = self.bin(a) * n + self.bin(b);
                d1[idx] = i_unit * a as f64 * vhat[idx];
                d2[idx] = i_unit * b as f64 * vhat[idx];
            }
        }
        let u1 = self.synthesize(&u1hat);
        let u2 = self.synthesize(&u2hat);
        let g1 = self.synthesize(&d1);
        let g2 = self.synthesize(&d2);
        let mut max_speed: f64 = 0.0;
        let mut prod = vec![Complex::new(0.0, 0.0); n * n];
        for i in 0..n * n {
            max_speed = max_speed.max(u1[i].abs()).max(u2[i].abs());
            prod[i] = Complex::new(u1[i] * g1[i] + u2[i] * g2[i], 0.0);
        }
        self.fft2(&mut prod, false);
        let scale = 1.0 / (n * n) as f64;
        let mut packed = vec![0.0; self.state_len()];
        for (i, &(k1, k2)) in self.reps.iter().enumerate() {
            let c_pos = prod[self.bin(k1) * n + self.bin(k2)] * scale;
            let c_neg = prod[self.bin(-k1) * n + self.bin(-k2)] * scale;
            // Exact conjugate symmetrization, then negate for −(u·∇)v.
            let sym = (c_pos + c_neg.conj()) * 0.5;
            packed[2 * i] = -sym.re;
            packed[2 * i + 1] = -sym.im;
        }
        (packed, max_speed)
    }

    /// Public diagnostic: the packed nonlinear term at a state.
    pub fn nonlinear_packed(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.nonlinear(state).0)
    }

    /// Spectral divergence of the reconstructed velocity: max_k |k·û_k|.
    pub fn spectral_divergence_max(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        let vhat = self.to_grid(state);
        let (u1, u2) = self.velocity_grids(&vhat);
        let n = self.grid;
        let mut worst: f64 = 0.0;
        for &(k1, k2) in &self.reps {
            for &(a, b) in &[(k1, k2), (-k1, -k2)] {
                let idx = self.bin(a) * n + self.bin(b);
                let div = Complex::new(a as f64, 0.0) * u1[idx] * Complex::new(0.0, 1.0)
                    + Complex::new(b as f64, 0.0) * u2[idx] * Complex::new(0.0, 1.0);
                worst = worst.max(div.norm());
            }
        }
        Ok(worst)
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(Error::Dimension(format!(
                "state has {} coordinates, model needs {}",
                state.len(),
                self.state_len()
            )));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup("state contains non-finite coefficients".into()));
        }
        Ok(())
    }

    /// Velocity vector at a torus point, reconstructed from the vorticity.
    pub fn velocity_at(&self, state: &[f64], point: (f64, f64)) -> (f64, f64) {
        let mut u = (0.0, 0.0);
        for (i, &(k1, k2)) in self.reps.iter().enumerate() {
            let c = Complex::new(state[2 * i], state[2 * i + 1]);
            let k2norm = (k1 * k1 + k2 * k2) as f64;
            let phase = k1 as f64 * point.0 + k2 as f64 * point.1;
            let e = Complex::new(phase.cos(), phase.sin());
            // Conjugate pair contributes twice the real part.
            let coeff = c * e;
            u.0 += 2.0 * (Complex::new(0.0, k2 as f64 / k2norm) * coeff).re;
            u.1 += 2.0 * (Complex::new(0.0, -(k1 as f64) / k2norm) * coeff).re;
        }
        u
    }

    /// Mean observation vector: (u₁, u₂) at each observation point.
    pub fn observe_mean(&self, state: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.obs_points.len());
        for &p in &self.obs_points {
            let (a, b) = self.velocity_at(state, p);
            out.push(a);
            out.push(b);
        }
        out
    }

    /// Squared Hellinger gap of the Gaussian observation laws at two states.
    pub fn hellinger_gap(&self, a: &[f64], b: &[f64]) -> f64 {
        let ma = self.observe_mean(a);
        let mb = self.observe_mean(b);
        let q: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
        2.0 - 2.0 * (-q / (8.0 * self.obs_var)).exp()
    }

    /// Gaussian field with the linear-dynamics stationary mode variances —
    /// a convenient spread-out initial condition.
    pub fn sample_gaussian_field(&self, stream: &mut Stream) -> Vec<f64> {
        let mut state = self.zero_state();
        for (i, &(k1, k2)) in self.reps.iter().enumerate() {
            let forced_amp = self
                .forced_all
                .iter()
                .find(|&&(k, _)| k == (k1, k2))
                .map(|&(_, s)| s)
                .unwrap_or(0.25);
            let k2norm = (k1 * k1 + k2 * k2) as f64;
            let sd = (forced_amp * forced_amp / (2.0 * self.nu * k2norm) / 2.0).sqrt();
            state[2 * i] = sd * stream.normal();
            state[2 * i + 1] = sd * stream.normal();
        }
        state
    }
}

/// One inner step: Crank–Nicolson viscosity, explicit dealiased nonlinear
/// term, noise on the forced conjugate pairs. `noise` supplies
/// 2 variates per forced representative (re, im).
pub fn ns_step(model: &NSModel, state: &mut Vec<f64>, noise: &[f64]) -> Result<()> {
    model.check_state(state)?;
    if noise.len() != model.noise_len() {
        return Err(Error::Dimension(format!(
            "noise has {} variates, model needs {}",
            noise.len(),
            model.noise_len()
        )));
    }
    let (nl, max_speed) = model.nonlinear(state);
    let cfl = model.h * max_speed * model.cutoff as f64;
    if cfl > CFL_LIMIT {
        return Err(Error::Blowup(format!(
            "CFL violation: h·|u|·k = {cfl} exceeds {CFL_LIMIT}; reduce the inner step"
        )));
    }
    let sqrt_h = model.h.sqrt();
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    for (i, &(k1, k2)) in model.reps.iter().enumerate() {
        let k2norm = (k1 * k1 + k2 * k2) as f64;
        let a = model.nu * k2norm * model.h / 2.0;
        let (mut fr, mut fi) = (0.0, 0.0);
        if let Ok(j) = model.forced_reps.binary_search_by_key(&(k1, k2), |&(k, _)| k) {
            let sigma = model.forced_reps[j].1;
            fr = sigma * sqrt_h * noise[2 * j] * inv_sqrt2;
            fi = sigma * sqrt_h * noise[2 * j + 1] * inv_sqrt2;
        }
        state[2 * i] = ((1.0 - a) * state[2 * i] + model.h * nl[2 * i] + fr) / (1.0 + a);
        state[2 * i + 1] =
            ((1.0 - a) * state[2 * i + 1] + model.h * nl[2 * i + 1] + fi) / (1.0 + a);
    }
    Ok(())
}

/// Noisy velocity observations at the model's points.
pub fn ns_observe(model: &NSModel, state: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    model.check_state(state)?;
    if noise.len() != 2 * model.obs_points.len() {
        return Err(Error::Dimension(format!(
            "noise has {} variates, observations need {}",
            noise.len(),
            2 * model.obs_points.len()
        )));
    }
    let r_std = model.obs_var.sqrt();
    Ok(model
        .observe_mean(state)
        .iter()
        .zip(noise)
        .map(|(m, n)| m + r_std * n)
        .collect())
}

impl ParticleModel for NSModel {
    fn state_dim(&self) -> usize {
        self.state_len()
    }

    fn obs_dim(&self) -> usize {
        2 * self.obs_points.len()
    }

    fn step_state(&self, state: &mut Vec<f64>, stream: &mut Stream) -> Result<()> {
        for _ in 0..self.steps_per_sample {
            let noise = stream.normal_vec(self.noise_len());
            ns_step(self, state, &noise)?;
        }
        Ok(())
    }

    fn observe(&self, state: &[f64], stream: &mut Stream) -> Vec<f64> {
        let noise = stream.normal_vec(2 * self.obs_points.len());
        ns_observe(self, state, &noise).expect("dimensions fixed by the model")
    }

    fn obs_log_density(&self, state: &[f64], y: &[f64]) -> f64 {
        let mean = self.observe_mean(state);
        let r = self.obs_var;
        let norm = -0.5 * (2.0 * PI * r).ln() * mean.len() as f64;
        norm - mean.iter().zip(y).map(|(m, v)| (v - m) * (v - m)).sum::<f64>() / (2.0 * r)
    }

    fn metric(&self) -> MetricSpec {
        // Packed H¹: weight √2·|k| on both the real and imaginary parts.
        let mut weights = Vec::with_capacity(self.state_len());
        for &(k1, k2) in &self.reps {
            let w = (2.0 * ((k1 * k1 + k2 * k2) as f64)).sqrt();
            weights.push(w);
            weights.push(w);
        }
        MetricSpec::WeightedSobolev { s: 1.0, mode_weights: weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_assumptions_are_validated() {
        let mk = |forced: Vec<((i32, i32), f64)>| {
            NSModel::new(16, 0.5, forced, 0.005, 0.05, vec![(1.0, 2.0)], 0.04)
        };
        // Valid default set.
        assert!(mk(vec![
            ((1, 0), 1.0),
            ((-1, 0), 1.0),
            ((0, 1), 1.0),
            ((0, -1), 1.0),
            ((1, 1), 1.0),
            ((-1, -1), 1.0),
        ])
        .is_ok());
        // Asymmetric.
        let err = mk(vec![((1, 0), 1.0), ((0, 1), 1.0), ((0, -1), 1.0)]).unwrap_err();
        assert!(err.to_string().contains("symmetric"), "{err}");
        // Fails to generate the lattice (all coordinates even).
        let err = mk(vec![((2, 0), 1.0), ((-2, 0), 1.0), ((0, 4), 1.0), ((0, -4), 1.0)])
            .unwrap_err();
        assert!(err.to_string().contains("lattice"), "{err}");
        // The canonical bad pair.
        let err = mk(vec![((2, 0), 1.0), ((-2, 0), 1.0)]).unwrap_err();
        assert!(err.to_string().contains("lattice"), "{err}");
        // Generates, but only one magnitude.
        let err = mk(vec![((1, 0), 1.0), ((-1, 0), 1.0), ((0, 1), 1.0), ((0, -1), 1.0)])
            .unwrap_err();
        assert!(err.to_string().contains("magnitude"), "{err}");
        // Mismatched mirror amplitudes.
        let err = mk(vec![
            ((1, 0), 1.0),
            ((-1, 0), 2.0),
            ((0, 1), 1.0),
            ((0, -1), 1.0),
            ((1, 1), 1.0),
            ((-1, -1), 1.0),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("amplitudes differ"), "{err}");
    }

    #[test]
    fn zero_state_without_noise_stays_zero() {
        let model = NSModel::default_desk();
        let mut state = model.zero_state();
        let zero_noise = vec![0.0; model.noise_len()];
        for _ in 0..5 {
            ns_step(&model, &mut state, &zero_noise).unwrap();
        }
        assert!(state.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_decays_at_the_viscous_rate() {
        let model = NSModel::default_desk();
        for k in [(1, 0), (0, 2), (2, 1)] {
            let mut state = model.single_mode_state(k, 0.6).unwrap();
            // Nonlinear term of a single wave vanishes: u ⟂ ∇v pointwise.
            let nl = model.nonlinear_packed(&state).unwrap();
            let nl_norm: f64 = nl.iter().map(|v| v * v).sum::<f64>();
            assert!(nl_norm.sqrt() < 1e-13, "mode {k:?}: nonlinear term {}", nl_norm.sqrt());

            let zero_noise = vec![0.0; model.noise_len()];
            let steps = 200; // t = 1.0
            for _ in 0..steps {
                ns_step(&model, &mut state, &zero_noise).unwrap();
            }
            let t = steps as f64 * model.h();
            let k2 = (k.0 * k.0 + k.1 * k.1) as f64;
            let expect = 0.3 * (-model.nu() * k2 * t).exp();
            let got = model.mode_coefficient(&state, k).unwrap().re;
            assert!(
                (got - expect).abs() < 1e-6,
                "mode {k:?}: {got} vs e^{{−ν|k|²t}} prediction {expect}"
            );
            // All other modes stay numerically silent.
            let energy_rest = model.energy(&state) - 2.0 * got * got;
            assert!(energy_rest.abs() < 1e-20, "leaked energy {energy_rest}");
        }
    }

    #[test]
    fn reality_symmetry_and_zero_mode_are_exact() {
        // The packed representation stores conjugate-pair representatives
        // only, so symmetry and the silent zero mode are structural; check
        // that a forced run keeps every coefficient finite and the grid
        // expansion symmetric.
        let model = NSModel::default_desk();
        let mut stream = Stream::new(2, 0, "ns");
        let mut state = model.sample_gaussian_field(&mut stream);
        for _ in 0..20 {
            model.step_state(&mut state, &mut stream).unwrap();
        }
        let grid = model.to_grid(&state);
        let n = model.grid();
        assert_eq!(grid[0], Complex::new(0.0, 0.0), "zero mode must stay zero");
        for k1 in -model.cutoff()..=model.cutoff() {
            for k2 in -model.cutoff()..=model.cutoff() {
                let a = grid[model.bin(k1) * n + model.bin(k2)];
                let b = grid[model.bin(-k1) * n + model.bin(-k2)];
                assert!((a - b.conj()).norm() == 0.0, "asymmetry at ({k1},{k2})");
            }
        }
    }

    #[test]
    fn reconstructed_velocity_is_divergence_free() {
        let model = NSModel::default_desk();
        let mut stream = Stream::new(4, 0, "ns");
        let state = model.sample_gaussian_field(&mut stream);
        assert!(model.spectral_divergence_max(&state).unwrap() < 1e-12);
    }

    #[test]
    fn energy_balance_holds_at_stationarity() {
        let model = NSModel::default_desk();
        let mut stream = Stream::new(77, 0, "ns-energy");
        let mut state = model.zero_state();
        // Burn in to stationarity.
        for _ in 0..400 {
            model.step_state(&mut state, &mut stream).unwrap();
        }
        let n_batches = 40;
        let batch = 150;
        let mut batch_diss = Vec::with_capacity(n_batches);
        for _ in 0..n_batches {
            let mut acc = 0.0;
            for _ in 0..batch {
                model.step_state(&mut state, &mut stream).unwrap();
                acc += 2.0 * model.nu() * model.h1_energy(&state);
            }
            batch_diss.push(acc / batch as f64);
        }
        let nb = n_batches as f64;
        let grand: f64 = batch_diss.iter().sum::<f64>() / nb;
        let var: f64 =
            batch_diss.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (nb - 1.0);
        let se = (var / nb).sqrt();
        let inject = model.injection_rate();
        assert!(
            (grand - inject).abs() < 3.0 * se.max(1e-3),
            "mean dissipation {grand} vs injection {inject} (se {se})"
        );
    }

    #[test]
    fn observation_log_density_and_gap() {
        let model = NSModel::default_desk();
        let mut stream = Stream::new(8, 0, "ns-obs");
        let state = model.sample_gaussian_field(&mut stream);
        let y = {
            let mut s = Stream::new(8, 1, "ns-obs");
            let m: &dyn ParticleModel = &model;
            m.observe(&state, &mut s)
        };
        assert_eq!(y.len(), 4);
        assert!(model.obs_log_density(&state, &y).is_finite());
        assert_eq!(model.hellinger_gap(&state, &state), 0.0);
        let other = model.zero_state();
        let gap = model.hellinger_gap(&state, &other);
        assert!(gap > 0.0 && gap <= 2.0);
    }

    #[test]
    fn cfl_violation_is_reported() {
        // A huge single mode produces a huge advecting velocity.
        let model = NSModel::default_desk();
        let mut state = model.single_mode_state((1, 0), 1e5).unwrap();
        let noise = vec![0.0; model.noise_len()];
        let err = ns_step(&model, &mut state, &noise).unwrap_err();
        assert!(matches!(err, Error::Blowup(_)), "{err}");
    }

    #[test]
    fn step_determinism() {
        let model = NSModel::default_desk();
        let mut s1 = Stream::new(12, 3, "ns");
        let mut s2 = Stream::new(12, 3, "ns");
        let mut a = model.sample_gaussian_field(&mut s1);
        let mut b = model.sample_gaussian_field(&mut s2);
        assert_eq!(a, b);
        for _ in 0..3 {
            model.step_state(&mut a, &mut s1).unwrap();
            model.step_state(&mut b, &mut s2).unwrap();
        }
        assert_eq!(a, b);
    }
}
