//! Experiment execution: build the configured model, run the requested
//! probe, and emit a flat record table plus a JSON summary whose verdicts
//! can be recomputed from the records alone. Replicated work runs on rayon
//! but is always collected in replica order, so results are a pure function
//! of (config, seed).

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::conditional::{inheritance_experiment, FiniteHMM};
use crate::coupling::{
    alpha_estimate, monotone_coupling_run, synchronous_coupling_run, CommonNoise, CoupledPair,
    CouplingReport, DEFAULT_ALPHA_EPSILON, DEFAULT_ALPHA_HORIZON,
};
use crate::filter::{
    gamma_step, stability_run_exact, stability_run_particle, ParticleConfig, ParticleDistance,
    ParticleModel, StabilityCurve,
};
use crate::markov::{
    beta_mixing_coeff, local_mixing_probe, stationary, zero_two_probe, FiniteChain, Projection,
};
use crate::measure::Categorical;
use crate::models::delay::DelayModel;
use crate::models::fixtures::{self, Fixture, FixtureFacts};
use crate::models::heat::HeatModel;
use crate::models::ns::NSModel;
use crate::models::spin::SpinModel;
use crate::rng::Stream;
use crate::{Error, Result};

use super::config::{ExperimentConfig, ExperimentKind, ModelConfig};
use super::output::ResultRecord;

/// Everything a run produces before any file is written.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<ResultRecord>,
    pub summary: Value,
    pub plot_series: Vec<(String, Vec<(f64, f64)>)>,
}

/// A constructed model from the catalog, with the known facts for fixtures.
pub enum BuiltModel {
    Chain { chain: FiniteChain, facts: FixtureFacts },
    Product { product: crate::markov::ProductChain, facts: FixtureFacts },
    Hmm { hmm: FiniteHMM, facts: FixtureFacts },
    Heat(HeatModel),
    Ns(NSModel),
    Spin(SpinModel),
    Delay(DelayModel),
}

/// Default forced mode set of the vorticity model: the four unit modes plus
/// the diagonal pair, which generates the lattice and spans two magnitudes.
fn default_ns_forcing() -> Vec<((i32, i32), f64)> {
    vec![
        ((1, 0), 1.0),
        ((-1, 0), 1.0),
        ((0, 1), 1.0),
        ((0, -1), 1.0),
        ((1, 1), 1.0),
        ((-1, -1), 1.0),
    ]
}

/// Construct the configured model, applying desk defaults for unset
/// parameters. All constructor-level validation fires here.
pub fn build_model(model: &ModelConfig) -> Result<BuiltModel> {
    match model.name.as_str() {
        "heat" => {
            let modes = model.modes.unwrap_or(8);
            let sigmas: Vec<f64> = (1..=modes).map(|k| 1.0 / k as f64).collect();
            Ok(BuiltModel::Heat(HeatModel::new(
                sigmas,
                0.1,
                vec![0.2, 0.5, 0.8],
                model.obs_var.unwrap_or(0.04),
            )?))
        }
        "ns" => {
            let forced = match &model.forcing {
                Some(entries) => entries
                    .iter()
                    .map(|e| ((e.k[0], e.k[1]), e.amplitude))
                    .collect(),
                None => default_ns_forcing(),
            };
            Ok(BuiltModel::Ns(NSModel::new(
                model.grid.unwrap_or(16),
                model.nu.unwrap_or(0.5),
                forced,
                0.005,
                0.05,
                vec![(1.0, 2.0), (4.0, 1.5)],
                0.04,
            )?))
        }
        "spin" => Ok(BuiltModel::Spin(SpinModel::desk_ring(
            model.sites.unwrap_or(32),
            model.beta.unwrap_or(0.4),
        )?)),
        "delay" => Ok(BuiltModel::Delay(DelayModel::new(
            model.a.unwrap_or(2.0),
            model.b.unwrap_or(0.5),
            0.5,
            1.0,
            0.01,
            0.2,
            0.01,
        )?)),
        fixture => {
            let param = match fixture {
                "two_state_flip" | "product_flip" => model.p,
                "revealing_hmm" => model.eps,
                _ => None,
            };
            match fixtures::make_fixture_with(fixture, param)? {
                Fixture::Chain { chain, facts } => Ok(BuiltModel::Chain { chain, facts }),
                Fixture::Product { product, facts } => {
                    let product = match model.width {
                        Some(w) => fixtures::product_flip(w, model.p.unwrap_or(0.25))?,
                        None => product,
                    };
                    Ok(BuiltModel::Product { product, facts })
                }
                Fixture::Hmm { hmm, facts } => Ok(BuiltModel::Hmm { hmm, facts }),
            }
        }
    }
}

/// Every model name the runner can build, fixtures first.
pub fn model_catalog() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = fixtures::fixture_names().to_vec();
    names.extend_from_slice(&["heat", "ns", "spin", "delay"]);
    names
}

/// Run one experiment to completion.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match cfg.kind {
        ExperimentKind::ZeroTwo => run_zero_two(cfg),
        ExperimentKind::LocalMixing => run_local_mixing(cfg),
        ExperimentKind::BetaDecay => run_beta_decay(cfg),
        ExperimentKind::ConditionalInheritance => run_conditional_inheritance(cfg),
        ExperimentKind::FilterStability => run_filter_stability(cfg),
        ExperimentKind::CouplingAlpha => run_coupling_alpha(cfg),
        ExperimentKind::HellingerCheck => run_hellinger_check(cfg),
        ExperimentKind::GammaErgodicity => run_gamma_ergodicity(cfg),
    }
}

fn mismatch(kind: ExperimentKind, name: &str) -> Error {
    Error::InvalidInput(format!(
        "experiment `{}` cannot run on model `{name}`",
        kind.as_str()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() < 2 {
        0.0
    } else {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Welch statistic for equality of two means from batch-mean samples.
fn welch_z(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let denom = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    (ma - mb) / denom.max(1e-150)
}

/// Make a free-form tag CSV-safe.
fn tag(s: &str) -> String {
    s.replace(", ", ";").replace([',', '\n', '\r'], ";")
}

fn trace_series(name: &str, trace: &[f64]) -> (String, Vec<(f64, f64)>) {
    (
        name.to_string(),
        trace.iter().enumerate().map(|(n, &v)| (n as f64, v)).collect(),
    )
}

// ---------------------------------------------------------------------------
// zero_two / local_mixing / beta_decay
// ---------------------------------------------------------------------------

fn run_zero_two(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let n_max = cfg.run.horizon.unwrap_or(64);
    let alpha = cfg.run.alpha.unwrap_or(1.0);
    let k_max = cfg.run.k_window.unwrap_or(8);
    let (report, facts, window) = match &built {
        BuiltModel::Chain { chain, facts } => {
            if cfg.run.coordinates.is_some() {
                return Err(Error::InvalidInput(
                    "coordinates apply only to product models".into(),
                ));
            }
            let proj = Projection::identity(chain.n_states())?;
            (
                zero_two_probe(chain, &proj, n_max, k_max, alpha)?,
                facts.clone(),
                "identity".to_string(),
            )
        }
        BuiltModel::Product { product, facts } => {
            let coords = cfg.run.coordinates.clone().unwrap_or_else(|| vec![0]);
            let chain = product.realize()?;
            let proj = product.coordinate_projection(&coords)?;
            let label = format!(
                "coords:{}",
                coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+")
            );
            (
                zero_two_probe(&chain, &proj, n_max, k_max, alpha)?,
                facts.clone(),
                label,
            )
        }
        _ => return Err(mismatch(cfg.kind, &cfg.model.name)),
    };
    let mut records = Vec::with_capacity(report.tv_trace.len());
    for (n, &v) in report.tv_trace.iter().enumerate() {
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            n as u64,
            "window_tv",
            v,
            &window,
        )?);
    }
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "alpha": alpha,
        "k_used": report.k_used,
        "horizon": n_max,
        "locally_ergodic": report.locally_irreducible,
        "verdict": if report.locally_irreducible { "locally ergodic" } else { "not locally ergodic" },
        "witness_n": report.witness_n,
        "final_window_tv": report.tv_trace.last().copied(),
        "expected_locally_ergodic": facts.locally_ergodic,
        "matches_expectation": report.locally_irreducible == facts.locally_ergodic,
    });
    let plot_series = vec![trace_series("window_tv", &report.tv_trace)];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

fn run_local_mixing(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let BuiltModel::Product { product, facts } = &built else {
        return Err(mismatch(cfg.kind, &cfg.model.name));
    };
    let n_max = cfg.run.horizon.unwrap_or(64);
    let alpha = cfg.run.alpha.unwrap_or(1.0);
    let k_max = cfg.run.k_window.unwrap_or(8);
    let coords = cfg.run.coordinates.clone().unwrap_or_else(|| vec![0]);
    let report = local_mixing_probe(product, &coords, n_max, k_max, alpha)?;
    let window = format!(
        "coords:{}",
        coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+")
    );
    let mut records = Vec::new();
    for (n, &v) in report.local.tv_trace.iter().enumerate() {
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            n as u64,
            "local_window_tv",
            v,
            &window,
        )?);
    }
    for (n, &v) in report.full_max_pair_trace.iter().enumerate() {
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            n as u64,
            "full_worst_pair_tv",
            v,
            "",
        )?);
    }
    for (n, &v) in report.full_vs_stationary_trace.iter().enumerate() {
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            n as u64,
            "full_vs_stationary_tv",
            v,
            "",
        )?);
    }
    let threshold = 2.0 - alpha;
    let full_witness = report
        .full_max_pair_trace
        .iter()
        .position(|&v| v <= threshold);
    // The contrast at the moment the window merges: how far apart the full
    // product still is when the local view is already below threshold.
    let full_at_local_witness = report
        .local
        .witness_n
        .and_then(|n| report.full_max_pair_trace.get(n).copied());
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "alpha": alpha,
        "k_used": report.local.k_used,
        "horizon": n_max,
        "locally_ergodic": report.local.locally_irreducible,
        "verdict": if report.local.locally_irreducible { "locally ergodic" } else { "not locally ergodic" },
        "local_witness_n": report.local.witness_n,
        "full_witness_n": full_witness,
        "full_tv_at_local_witness": full_at_local_witness,
        "expected_locally_ergodic": facts.locally_ergodic,
        "matches_expectation": report.local.locally_irreducible == facts.locally_ergodic,
    });
    let plot_series = vec![
        trace_series("local_window_tv", &report.local.tv_trace),
        trace_series("full_worst_pair_tv", &report.full_max_pair_trace),
        trace_series("full_vs_stationary_tv", &report.full_vs_stationary_trace),
    ];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

fn run_beta_decay(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let (chain, facts) = match &built {
        BuiltModel::Chain { chain, facts } => (chain.clone(), facts.clone()),
        BuiltModel::Product { product, facts } => (product.realize()?, facts.clone()),
        _ => return Err(mismatch(cfg.kind, &cfg.model.name)),
    };
    let horizon = cfg.run.horizon.unwrap_or(40);
    let threshold = cfg.run.threshold.unwrap_or(1e-3);
    let betas: Vec<f64> = (0..=horizon)
        .map(|n| beta_mixing_coeff(&chain, n as u64))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(betas.len());
    for (n, &v) in betas.iter().enumerate() {
        records.push(ResultRecord::new(cfg.kind.as_str(), 0, n as u64, "beta", v, "")?);
    }
    let monotone = betas.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let oracle_err: Option<f64> = match (facts.tv_decay_rate, chain.n_states()) {
        (Some(rate), 2) => Some(
            betas
                .iter()
                .enumerate()
                .map(|(n, &b)| (b - rate.powi(n as i32)).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let final_beta = *betas.last().expect("horizon >= 0");
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "horizon": horizon,
        "final_beta": final_beta,
        "monotone_nonincreasing": monotone,
        "threshold": threshold,
        "decays_below_threshold": final_beta < threshold,
        "oracle_max_abs_err": oracle_err,
    });
    let plot_series = vec![trace_series("beta", &betas)];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

// ---------------------------------------------------------------------------
// conditional_inheritance
// ---------------------------------------------------------------------------

fn run_conditional_inheritance(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let BuiltModel::Hmm { hmm, facts } = &built else {
        return Err(mismatch(cfg.kind, &cfg.model.name));
    };
    let n_paths = cfg.run.n_paths.unwrap_or(50);
    let horizon = cfg.run.horizon.unwrap_or(120);
    let lags = cfg.run.lags.clone().unwrap_or_else(|| vec![0, 5, 10, 20, 30]);
    let threshold = cfg.run.threshold.unwrap_or(1e-3);
    let table = inheritance_experiment(hmm, n_paths, horizon, &lags, cfg.seed)?;
    let mut records = Vec::new();
    for (i, &lag) in table.lags.iter().enumerate() {
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            lag as u64,
            "max_tv",
            table.max_tv[i],
            "",
        )?);
        records.push(ResultRecord::new(
            cfg.kind.as_str(),
            0,
            lag as u64,
            "mean_tv",
            table.mean_tv[i],
            "",
        )?);
    }
    let final_max = *table.max_tv.last().expect("at least one lag");
    let forgets = final_max < threshold;
    // A model whose observations never rule out a transition is expected to
    // forget; the parity counterexample is expected not to.
    let expected = facts.nondegenerate;
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "n_paths": table.n_paths,
        "horizon": horizon,
        "lags": table.lags,
        "final_lag": table.lags.last(),
        "final_max_tv": final_max,
        "threshold": threshold,
        "forgets": forgets,
        "expected_forgets": expected,
        "matches_expectation": expected.map(|e| e == forgets),
    });
    let plot_series = vec![
        (
            "max_tv".to_string(),
            table
                .lags
                .iter()
                .zip(&table.max_tv)
                .map(|(&l, &v)| (l as f64, v))
                .collect(),
        ),
        (
            "mean_tv".to_string(),
            table
                .lags
                .iter()
                .zip(&table.mean_tv)
                .map(|(&l, &v)| (l as f64, v))
                .collect(),
        ),
    ];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

// ---------------------------------------------------------------------------
// filter_stability
// ---------------------------------------------------------------------------

fn stability_outcome(
    cfg: &ExperimentConfig,
    curves: Vec<StabilityCurve>,
    horizon: usize,
    extra: Value,
) -> Result<ExperimentOutcome> {
    let mut records = Vec::new();
    for (r, curve) in curves.iter().enumerate() {
        for row in curve.rows() {
            records.push(ResultRecord::new(
                cfg.kind.as_str(),
                r as u64,
                row.n as u64,
                row.kind.label(),
                row.distance,
                tag(&row.field),
            )?);
        }
    }
    let label = curves[0].rows()[0].kind.label();
    let per_step: Vec<Vec<f64>> = curves.iter().map(|c| c.distances()).collect();
    let medians: Vec<f64> = (0..=horizon)
        .map(|n| median(per_step.iter().map(|d| d[n]).collect()))
        .collect();
    let initial = medians[0];
    let final_m = *medians.last().expect("horizon >= 1");
    let improved = per_step
        .iter()
        .filter(|d| d.last().unwrap() < d.first().unwrap())
        .count();
    let mut summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "horizon": horizon,
        "replicas": curves.len(),
        "distance": label,
        "initial_median": initial,
        "final_median": final_m,
        "final_over_initial": if initial > 0.0 { Some(final_m / initial) } else { None },
        "fraction_improved": improved as f64 / curves.len() as f64,
    });
    if let Value::Object(map) = &mut summary {
        if let Value::Object(extra_map) = extra {
            map.extend(extra_map);
        }
    }
    let plot_series = vec![(
        format!("median_{label}"),
        medians.iter().enumerate().map(|(n, &v)| (n as f64, v)).collect(),
    )];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

/// Particle stability over replicas, in parallel, collected in order.
fn particle_curves<M, FMu, FNu, FGa>(
    model: &M,
    make_mu: FMu,
    make_nu: FNu,
    make_gamma: FGa,
    t_len: usize,
    pc: &ParticleConfig,
    dist: &ParticleDistance,
    seed: u64,
    replicas: usize,
) -> Result<Vec<StabilityCurve>>
where
    M: ParticleModel + Sync,
    FMu: Fn() -> Box<dyn FnMut(&mut Stream) -> Vec<f64>> + Sync,
    FNu: Fn() -> Box<dyn FnMut(&mut Stream) -> Vec<f64>> + Sync,
    FGa: Fn() -> Box<dyn FnMut(&mut Stream) -> Vec<f64>> + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut mu = make_mu();
            let mut nu = make_nu();
            let mut ga = make_gamma();
            stability_run_particle(
                model,
                mu.as_mut(),
                nu.as_mut(),
                ga.as_mut(),
                t_len,
                pc,
                dist,
                seed,
                r as u64,
            )
        })
        .collect()
}

fn run_filter_stability(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let replicas = cfg.run.replicas.unwrap_or(20);
    match &built {
        BuiltModel::Hmm { hmm, .. } => {
            let horizon = cfg.run.horizon.unwrap_or(200);
            let m = hmm.n_hidden();
            let l = hmm.n_symbols();
            let mu = Categorical::point_mass(m, 0)?;
            let nu = Categorical::point_mass(m, m - 1)?;
            // Data are generated from the stationary hidden marginal.
            let pi = stationary(&hmm.joint_chain()?)?;
            let mut hidden = vec![0.0; m];
            for x in 0..m {
                for y in 0..l {
                    hidden[x] += pi.probs()[x * l + y];
                }
            }
            let gamma = Categorical::new(hidden)?;
            let curves: Vec<StabilityCurve> = (0..replicas)
                .into_par_iter()
                .map(|r| stability_run_exact(hmm, &mu, &nu, &gamma, horizon, cfg.seed, r as u64))
                .collect::<Result<_>>()?;
            stability_outcome(cfg, curves, horizon, json!({"filter": "exact"}))
        }
        BuiltModel::Heat(model) => {
            let horizon = cfg.run.horizon.unwrap_or(40);
            let pc = ParticleConfig::new(cfg.run.particles.unwrap_or(2000), 0.5)?;
            let dist = ParticleDistance::Bl { subsample: cfg.run.subsample.unwrap_or(200) };
            // The two priors disagree by five stationary standard deviations
            // in the slowest mode.
            let shift = 5.0 * model.stationary_std(1);
            let curves = particle_curves(
                model,
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.sample_stationary(s))
                },
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| {
                        let mut x = m.sample_stationary(s);
                        x[0] += shift;
                        x
                    })
                },
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.sample_stationary(s))
                },
                horizon,
                &pc,
                &dist,
                cfg.seed,
                replicas,
            )?;
            stability_outcome(
                cfg,
                curves,
                horizon,
                json!({"filter": "particle", "particles": pc.n_particles}),
            )
        }
        BuiltModel::Ns(model) => {
            let horizon = cfg.run.horizon.unwrap_or(30);
            let pc = ParticleConfig::new(cfg.run.particles.unwrap_or(400), 0.5)?;
            let dist = ParticleDistance::Bl { subsample: cfg.run.subsample.unwrap_or(200) };
            let curves = particle_curves(
                model,
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.sample_gaussian_field(s))
                },
                || {
                    let m = model.clone();
                    Box::new(move |_: &mut Stream| m.zero_state())
                },
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.sample_gaussian_field(s))
                },
                horizon,
                &pc,
                &dist,
                cfg.seed,
                replicas,
            )?;
            stability_outcome(
                cfg,
                curves,
                horizon,
                json!({"filter": "particle", "particles": pc.n_particles}),
            )
        }
        BuiltModel::Spin(model) => {
            let horizon = cfg.run.horizon.unwrap_or(40);
            let pc = ParticleConfig::new(cfg.run.particles.unwrap_or(2000), 0.5)?;
            let sites = cfg.run.coordinates.clone().unwrap_or_else(|| vec![0, 1, 2]);
            let levels = vec![1.0; sites.len()];
            let dist = ParticleDistance::WindowTv { sites, levels };
            let l = model.len();
            let curves = particle_curves(
                model,
                || {
                    Box::new(move |s: &mut Stream| {
                        (0..l)
                            .map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 })
                            .collect()
                    })
                },
                || Box::new(move |_: &mut Stream| vec![1.0; l]),
                || {
                    Box::new(move |s: &mut Stream| {
                        (0..l)
                            .map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 })
                            .collect()
                    })
                },
                horizon,
                &pc,
                &dist,
                cfg.seed,
                replicas,
            )?;
            stability_outcome(
                cfg,
                curves,
                horizon,
                json!({"filter": "particle", "particles": pc.n_particles}),
            )
        }
        BuiltModel::Delay(model) => {
            let horizon = cfg.run.horizon.unwrap_or(40);
            let pc = ParticleConfig::new(cfg.run.particles.unwrap_or(2000), 0.5)?;
            let dist = ParticleDistance::Bl { subsample: cfg.run.subsample.unwrap_or(200) };
            let curves = particle_curves(
                model,
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.constant_window(s.normal()))
                },
                || {
                    let m = model.clone();
                    Box::new(move |_: &mut Stream| m.constant_window(2.0))
                },
                || {
                    let m = model.clone();
                    Box::new(move |s: &mut Stream| m.constant_window(s.normal()))
                },
                horizon,
                &pc,
                &dist,
                cfg.seed,
                replicas,
            )?;
            stability_outcome(
                cfg,
                curves,
                horizon,
                json!({"filter": "particle", "particles": pc.n_particles}),
            )
        }
        _ => Err(mismatch(cfg.kind, &cfg.model.name)),
    }
}

// ---------------------------------------------------------------------------
// coupling_alpha
// ---------------------------------------------------------------------------

/// Per-pair coupling verdicts computed in parallel but with the exact same
/// replica indexing (`pair * replicas + repeat`) as a sequential sweep.
fn pair_reports<F>(
    run_pair: F,
    pairs: &[(Vec<f64>, Vec<f64>)],
    replicas: usize,
    t_len: usize,
    epsilon: f64,
) -> Result<Vec<CouplingReport>>
where
    F: Fn(&[f64], &[f64], usize, u64) -> Result<CoupledPair> + Sync,
{
    pairs
        .par_iter()
        .enumerate()
        .map(|(p, pair)| {
            alpha_estimate(
                |a, b, t, r| run_pair(a, b, t, (p * replicas) as u64 + r),
                std::slice::from_ref(pair),
                replicas,
                t_len,
                epsilon,
            )
        })
        .collect()
}

/// Merge single-pair reports into one report over all pairs: the headline
/// numbers come from the first pair attaining the minimum success count.
fn combine_reports(reports: &[CouplingReport], replicas: usize) -> CouplingReport {
    let mut worst = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.successes < reports[worst].successes {
            worst = i;
        }
    }
    let w = &reports[worst];
    CouplingReport {
        replicas,
        successes: w.successes,
        alpha_hat: w.alpha_hat,
        tail_sums: w.tail_sums.clone(),
        wilson_low: w.wilson_low,
        wilson_high: w.wilson_high,
        per_pair_alpha: reports.iter().map(|r| r.alpha_hat).collect(),
    }
}

fn report_json(report: &CouplingReport, horizon: usize) -> Value {
    json!({
        "horizon": horizon,
        "replicas": report.replicas,
        "successes": report.successes,
        "alpha_hat": report.alpha_hat,
        "wilson_low": report.wilson_low,
        "wilson_high": report.wilson_high,
        "per_pair_alpha": report.per_pair_alpha,
    })
}

fn run_coupling_alpha(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let replicas = cfg.run.replicas.unwrap_or(10);
    let horizon = cfg.run.horizon.unwrap_or(DEFAULT_ALPHA_HORIZON);
    let epsilon = cfg.run.epsilon.unwrap_or(DEFAULT_ALPHA_EPSILON);
    let threshold = cfg.run.alpha_threshold.unwrap_or(0.9);
    let double = cfg.run.double_horizon.unwrap_or(false);

    // Model-specific initial pairs and coupled-run closure.
    enum Runner<'a> {
        Common(&'a (dyn CommonNoise + Sync)),
        Spin(&'a SpinModel),
    }
    let (pairs, runner, coupling_name): (Vec<(Vec<f64>, Vec<f64>)>, Runner, &str) = match &built {
        BuiltModel::Heat(m) => {
            let n_pairs = cfg.run.n_pairs.unwrap_or(10);
            let pairs = (0..n_pairs)
                .map(|i| {
                    let mut s = Stream::new(cfg.seed, i as u64, "init");
                    (m.sample_stationary(&mut s), m.sample_stationary(&mut s))
                })
                .collect();
            (pairs, Runner::Common(m), "synchronous")
        }
        BuiltModel::Ns(m) => {
            let n_pairs = cfg.run.n_pairs.unwrap_or(10);
            let pairs = (0..n_pairs)
                .map(|i| {
                    let mut s = Stream::new(cfg.seed, i as u64, "init");
                    (m.sample_gaussian_field(&mut s), m.sample_gaussian_field(&mut s))
                })
                .collect();
            (pairs, Runner::Common(m), "synchronous")
        }
        BuiltModel::Delay(m) => {
            let n_pairs = cfg.run.n_pairs.unwrap_or(10);
            let pairs = (0..n_pairs)
                .map(|i| {
                    let mut s = Stream::new(cfg.seed, i as u64, "init");
                    (m.constant_window(s.normal()), m.constant_window(s.normal()))
                })
                .collect();
            (pairs, Runner::Common(m), "synchronous")
        }
        BuiltModel::Spin(m) => {
            if cfg.run.n_pairs.is_some() {
                return Err(Error::InvalidInput(
                    "n_pairs does not apply to the spin ring: the extreme ordered pair \
                     dominates every ordered pair under the monotone coupling"
                        .into(),
                ));
            }
            let l = m.len();
            (
                vec![(vec![-1.0; l], vec![1.0; l])],
                Runner::Spin(m),
                "monotone",
            )
        }
        _ => return Err(mismatch(cfg.kind, &cfg.model.name)),
    };

    let to_spins = |v: &[f64]| -> Vec<i8> {
        v.iter().map(|&x| if x > 0.0 { 1 } else { -1 }).collect()
    };
    let run_at = |t_len: usize| -> Result<Vec<CouplingReport>> {
        match &runner {
            Runner::Common(m) => pair_reports(
                |a, b, t, r| synchronous_coupling_run(*m, a, b, t, cfg.seed, r),
                &pairs,
                replicas,
                t_len,
                epsilon,
            ),
            Runner::Spin(m) => pair_reports(
                |a, b, t, r| monotone_coupling_run(m, &to_spins(a), &to_spins(b), t, cfg.seed, r),
                &pairs,
                replicas,
                t_len,
                epsilon,
            ),
        }
    };

    let sub = run_at(horizon)?;
    let report = combine_reports(&sub, replicas);
    let mut records = Vec::new();
    for (p, sub_report) in sub.iter().enumerate() {
        for (r, &tail) in sub_report.tail_sums.iter().enumerate() {
            records.push(ResultRecord::new(
                cfg.kind.as_str(),
                p as u64,
                r as u64,
                "tail_sum",
                tail,
                coupling_name,
            )?);
        }
    }

    // Representative coupled trajectory (first pair, first replica — the
    // same stream as inside the estimate) for the decay plot.
    let example = match &runner {
        Runner::Common(m) => {
            synchronous_coupling_run(*m, &pairs[0].0, &pairs[0].1, horizon, cfg.seed, 0)?
        }
        Runner::Spin(m) => monotone_coupling_run(
            m,
            &to_spins(&pairs[0].0),
            &to_spins(&pairs[0].1),
            horizon,
            cfg.seed,
            0,
        )?,
    };
    let plot_series = vec![
        trace_series("coupling_distance", example.coupling_distances()),
        trace_series("base_distance", example.base_distances()),
    ];

    let mut summary_obj = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "coupling": coupling_name,
        "epsilon": epsilon,
        "n_pairs": pairs.len(),
        "threshold": threshold,
        "pass": report.alpha_hat >= threshold,
    });
    if let Value::Object(map) = &mut summary_obj {
        if let Value::Object(base) = report_json(&report, horizon) {
            map.extend(base);
        }
        if double {
            let sub2 = run_at(2 * horizon)?;
            let report2 = combine_reports(&sub2, replicas);
            map.insert("sensitivity".to_string(), report_json(&report2, 2 * horizon));
        }
    }
    Ok(ExperimentOutcome { records, summary: summary_obj, plot_series })
}

// ---------------------------------------------------------------------------
// hellinger_check
// ---------------------------------------------------------------------------

fn run_hellinger_check(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let n_pairs = cfg.run.n_pairs.unwrap_or(1000);
    type GapFn<'a> = Box<dyn Fn(&[f64], &[f64]) -> f64 + 'a>;
    let (pairs, gap, dist, c_analytic): (Vec<(Vec<f64>, Vec<f64>)>, GapFn, GapFn, Option<f64>) =
        match &built {
            BuiltModel::Heat(m) => {
                let pairs = (0..n_pairs)
                    .map(|i| {
                        let mut s = Stream::new(cfg.seed, i as u64, "init");
                        (m.sample_stationary(&mut s), m.sample_stationary(&mut s))
                    })
                    .collect();
                let cap = m.n_obs() as f64 / (12.0 * m.obs_var());
                (
                    pairs,
                    Box::new(move |a: &[f64], b: &[f64]| m.hellinger_gap(a, b)) as GapFn,
                    Box::new(move |a: &[f64], b: &[f64]| m.coupling_distance(a, b)) as GapFn,
                    Some(cap),
                )
            }
            BuiltModel::Ns(m) => {
                let pairs = (0..n_pairs)
                    .map(|i| {
                        let mut s = Stream::new(cfg.seed, i as u64, "init");
                        (m.sample_gaussian_field(&mut s), m.sample_gaussian_field(&mut s))
                    })
                    .collect();
                (
                    pairs,
                    Box::new(move |a: &[f64], b: &[f64]| m.hellinger_gap(a, b)) as GapFn,
                    Box::new(move |a: &[f64], b: &[f64]| m.h1_distance(a, b)) as GapFn,
                    None,
                )
            }
            BuiltModel::Spin(m) => {
                let l = m.len();
                let pairs = (0..n_pairs)
                    .map(|i| {
                        let mut s = Stream::new(cfg.seed, i as u64, "init");
                        let draw = |s: &mut Stream| -> Vec<f64> {
                            (0..l)
                                .map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 })
                                .collect()
                        };
                        (draw(&mut s), draw(&mut s))
                    })
                    .collect();
                let to_spins = |v: &[f64]| -> Vec<i8> {
                    v.iter().map(|&x| if x > 0.0 { 1 } else { -1 }).collect()
                };
                (
                    pairs,
                    Box::new(move |a: &[f64], b: &[f64]| {
                        m.hellinger_gap(&to_spins(a), &to_spins(b))
                    }) as GapFn,
                    Box::new(move |a: &[f64], b: &[f64]| {
                        m.hamming_distance(&to_spins(a), &to_spins(b))
                    }) as GapFn,
                    None,
                )
            }
            BuiltModel::Delay(m) => {
                let w = m.window_len();
                let pairs = (0..n_pairs)
                    .map(|i| {
                        let mut s = Stream::new(cfg.seed, i as u64, "init");
                        let a = (0..w).map(|_| 1.5 * s.normal()).collect();
                        let b = (0..w).map(|_| 1.5 * s.normal()).collect();
                        (a, b)
                    })
                    .collect();
                let cap = 1.0 / (4.0 * m.obs_var());
                (
                    pairs,
                    Box::new(move |a: &[f64], b: &[f64]| m.hellinger_gap(a, b)) as GapFn,
                    Box::new(move |a: &[f64], b: &[f64]| m.sup_distance(a, b)) as GapFn,
                    Some(cap),
                )
            }
            _ => return Err(mismatch(cfg.kind, &cfg.model.name)),
        };

    let report = crate::coupling::hellinger_lipschitz_check(&gap, &dist, &pairs)?;
    let mut records = Vec::with_capacity(2 * pairs.len());
    let mut scatter: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (i, (a, b)) in pairs.iter().enumerate() {
        let g = gap(a, b);
        let d = dist(a, b);
        records.push(ResultRecord::new(cfg.kind.as_str(), i as u64, 0, "gap", g, "")?);
        records.push(ResultRecord::new(cfg.kind.as_str(), i as u64, 0, "dist", d, "")?);
        scatter.push((d, g));
    }
    scatter.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "n_pairs": report.n_pairs,
        "c_hat": report.c_hat,
        "max_ratio": report.max_ratio,
        "c_analytic": c_analytic,
        "within_analytic": c_analytic.map(|c| report.c_hat <= c),
    });
    let plot_series = vec![("gap_vs_dist".to_string(), scatter)];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

// ---------------------------------------------------------------------------
// gamma_ergodicity
// ---------------------------------------------------------------------------

fn run_gamma_ergodicity(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build_model(&cfg.model)?;
    let BuiltModel::Hmm { hmm, .. } = &built else {
        return Err(mismatch(cfg.kind, &cfg.model.name));
    };
    let horizon = cfg.run.horizon.unwrap_or(100_000);
    let chains = cfg.run.replicas.unwrap_or(1);
    let batches = 50.min(horizon);
    let batch_len = horizon / batches;
    let m = hmm.n_hidden();
    let l = hmm.n_symbols();
    // Initial observed symbol from the stationary symbol marginal.
    let pi = stationary(&hmm.joint_chain()?)?;
    let mut y_marginal = vec![0.0; l];
    for x in 0..m {
        for y in 0..l {
            y_marginal[y] += pi.probs()[x * l + y];
        }
    }

    let tasks: Vec<(usize, usize)> = (0..2)
        .flat_map(|init| (0..chains).map(move |c| (init, c)))
        .collect();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = tasks
        .par_iter()
        .map(|&(init, c)| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut stream = Stream::new(cfg.seed, (init * chains + c) as u64, "gamma");
            let mut nu = if init == 0 {
                Categorical::point_mass(m, 0)?
            } else {
                Categorical::uniform(m)?
            };
            let mut y = stream.categorical(&y_marginal);
            let mut f1 = Vec::with_capacity(batches);
            let mut f2 = Vec::with_capacity(batches);
            for _ in 0..batches {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for _ in 0..batch_len {
                    let (next, yp) = gamma_step(hmm, &nu, y, &mut stream)?;
                    nu = next;
                    y = yp;
                    for (x, &w) in nu.probs().iter().enumerate() {
                        s1 += w * x as f64;
                        s2 += w * (x * x) as f64;
                    }
                }
                f1.push(s1 / batch_len as f64);
                f2.push(s2 / batch_len as f64);
            }
            Ok((f1, f2))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut pooled: [[Vec<f64>; 2]; 2] = Default::default();
    for (idx, &(init, c)) in tasks.iter().enumerate() {
        let (f1, f2) = &runs[idx];
        let replica = (init * chains + c) as u64;
        let meta = format!("init:{init}");
        for (b, &v) in f1.iter().enumerate() {
            records.push(ResultRecord::new(
                cfg.kind.as_str(),
                replica,
                b as u64,
                "f1_batch_mean",
                v,
                &meta,
            )?);
        }
        for (b, &v) in f2.iter().enumerate() {
            records.push(ResultRecord::new(
                cfg.kind.as_str(),
                replica,
                b as u64,
                "f2_batch_mean",
                v,
                &meta,
            )?);
        }
        pooled[0][init].extend_from_slice(f1);
        pooled[1][init].extend_from_slice(f2);
    }
    let z1 = welch_z(&pooled[0][0], &pooled[0][1]);
    let z2 = welch_z(&pooled[1][0], &pooled[1][1]);
    let summary = json!({
        "experiment": cfg.kind.as_str(),
        "model": cfg.model.name,
        "seed": cfg.seed,
        "horizon": batches * batch_len,
        "batches": batches,
        "chains_per_init": chains,
        "f1_mean_init0": mean_var(&pooled[0][0]).0,
        "f1_mean_init1": mean_var(&pooled[0][1]).0,
        "f2_mean_init0": mean_var(&pooled[1][0]).0,
        "f2_mean_init1": mean_var(&pooled[1][1]).0,
        "z_f1": z1,
        "z_f2": z2,
        "pass": z1.abs() <= 3.0 && z2.abs() <= 3.0,
    });
    let plot_series = vec![
        (
            "f1_init0".to_string(),
            pooled[0][0].iter().enumerate().map(|(b, &v)| (b as f64, v)).collect(),
        ),
        (
            "f1_init1".to_string(),
            pooled[0][1].iter().enumerate().map(|(b, &v)| (b as f64, v)).collect(),
        ),
    ];
    Ok(ExperimentOutcome { records, summary, plot_series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::parse_config;
    use crate::experiment::output::render_csv;

    fn run(text: &str) -> ExperimentOutcome {
        let cfg = parse_config(text).unwrap();
        execute(&cfg).unwrap()
    }

    #[test]
    fn zero_two_verdicts_match_fixture_facts() {
        let out = run(
            "kind = \"zero_two\"\nseed = 5\n[model]\nname = \"product_flip\"\n[run]\nhorizon = 20\n",
        );
        assert_eq!(out.summary["locally_ergodic"], true);
        assert_eq!(out.summary["matches_expectation"], true);
        assert_eq!(out.records.len(), 21);
        assert!(out.summary["witness_n"].as_u64().is_some());

        let out = run(
            "kind = \"zero_two\"\nseed = 5\n[model]\nname = \"periodic2\"\n[run]\nhorizon = 12\n",
        );
        assert_eq!(out.summary["locally_ergodic"], false);
        assert_eq!(out.summary["matches_expectation"], true);
        assert!(out.records.iter().all(|r| (r.value - 2.0).abs() < 1e-12));
    }

    #[test]
    fn local_mixing_contrasts_window_and_full_product() {
        let out = run(
            "kind = \"local_mixing\"\nseed = 5\n[model]\nname = \"product_flip\"\n[run]\nhorizon = 16\n",
        );
        assert_eq!(out.summary["locally_ergodic"], true);
        let local = out.summary["local_witness_n"].as_u64().unwrap();
        let full = out.summary["full_witness_n"].as_u64().unwrap();
        assert!(local <= full, "local {local} vs full {full}");
        assert!(out.summary["full_tv_at_local_witness"].as_f64().unwrap() >= 1.0);
        assert_eq!(out.plot_series.len(), 3);
    }

    #[test]
    fn beta_decay_matches_two_state_oracle() {
        let out = run(
            "kind = \"beta_decay\"\nseed = 1\n[model]\nname = \"two_state_flip\"\np = 0.3\n[run]\nhorizon = 30\n",
        );
        assert!(out.summary["oracle_max_abs_err"].as_f64().unwrap() < 1e-12);
        assert_eq!(out.summary["monotone_nonincreasing"], true);
        assert_eq!(out.summary["decays_below_threshold"], true);

        let out = run("kind = \"beta_decay\"\nseed = 1\n[model]\nname = \"periodic2\"\n");
        assert_eq!(out.summary["decays_below_threshold"], false);
        assert!((out.summary["final_beta"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_inheritance_separates_mixing_from_parity() {
        let base = "kind = \"conditional_inheritance\"\nseed = 9\n[model]\nname = \"NAME\"\n[run]\nhorizon = 60\nn_paths = 10\nlags = [0, 10, 20]\nthreshold = 0.05\n";
        let out = run(&base.replace("NAME", "mixing3_hmm"));
        assert_eq!(out.summary["forgets"], true);
        assert_eq!(out.summary["matches_expectation"], true);

        let out = run(&base.replace("NAME", "parity_degenerate_hmm"));
        assert_eq!(out.summary["forgets"], false);
        assert_eq!(out.summary["matches_expectation"], true);
        assert!(out.summary["final_max_tv"].as_f64().unwrap() >= 1.0);
    }

    #[test]
    fn exact_filter_stability_contracts_on_the_mixing_model() {
        let out = run(
            "kind = \"filter_stability\"\nseed = 3\n[model]\nname = \"mixing3_hmm\"\n[run]\nhorizon = 60\nreplicas = 5\n",
        );
        assert_eq!(out.summary["filter"], "exact");
        let initial = out.summary["initial_median"].as_f64().unwrap();
        let final_m = out.summary["final_median"].as_f64().unwrap();
        assert!(initial > 1.9, "point-mass priors start far apart: {initial}");
        assert!(final_m < 0.1, "final median {final_m}");
        assert_eq!(out.summary["fraction_improved"], 1.0);
        assert_eq!(out.records.len(), 5 * 61);
    }

    #[test]
    fn spin_particle_stability_runs_and_reports_window_tv() {
        let out = run(
            "kind = \"filter_stability\"\nseed = 3\n[model]\nname = \"spin\"\nsites = 8\n[run]\nhorizon = 6\nreplicas = 2\nparticles = 200\n",
        );
        assert_eq!(out.summary["distance"], "tv");
        assert_eq!(out.records.len(), 2 * 7);
        assert!(out.records.iter().all(|r| r.value.is_finite() && r.value >= 0.0));
        assert!(out.records.iter().all(|r| !r.metadata.contains(',')));
    }

    #[test]
    fn delay_coupling_alpha_hits_one_in_the_contractive_regime() {
        let out = run(
            "kind = \"coupling_alpha\"\nseed = 11\n[model]\nname = \"delay\"\n[run]\nhorizon = 150\nreplicas = 3\nn_pairs = 2\ndouble_horizon = true\n",
        );
        assert_eq!(out.summary["alpha_hat"], 1.0);
        assert_eq!(out.summary["pass"], true);
        assert_eq!(out.records.len(), 2 * 3);
        assert_eq!(out.summary["sensitivity"]["alpha_hat"], 1.0);
        assert_eq!(out.summary["sensitivity"]["horizon"], 300);
        let alphas = out.summary["per_pair_alpha"].as_array().unwrap();
        assert_eq!(alphas.len(), 2);
    }

    #[test]
    fn spin_coupling_rejects_n_pairs_and_uses_the_extreme_pair() {
        let err = parse_config(
            "kind = \"coupling_alpha\"\nseed = 2\n[model]\nname = \"spin\"\n[run]\nn_pairs = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("extreme"), "{err}");

        let out = run(
            "kind = \"coupling_alpha\"\nseed = 2\n[model]\nname = \"spin\"\nsites = 8\n[run]\nhorizon = 60\nreplicas = 4\n",
        );
        assert_eq!(out.summary["n_pairs"], 1);
        assert_eq!(out.summary["coupling"], "monotone");
        assert_eq!(out.records.len(), 4);
    }

    #[test]
    fn heat_hellinger_scan_stays_below_the_analytic_cap() {
        let out = run(
            "kind = \"hellinger_check\"\nseed = 7\n[model]\nname = \"heat\"\n[run]\nn_pairs = 300\n",
        );
        let c_hat = out.summary["c_hat"].as_f64().unwrap();
        let cap = out.summary["c_analytic"].as_f64().unwrap();
        assert!((cap - 6.25).abs() < 1e-12);
        assert!(c_hat > 0.0 && c_hat <= cap, "c_hat {c_hat} vs cap {cap}");
        assert_eq!(out.summary["within_analytic"], true);
        assert_eq!(out.records.len(), 600);
    }

    #[test]
    fn gamma_moments_agree_across_initializations() {
        let out = run(
            "kind = \"gamma_ergodicity\"\nseed = 13\n[model]\nname = \"mixing3_hmm\"\n[run]\nhorizon = 4000\n",
        );
        assert_eq!(out.summary["pass"], true, "summary: {}", out.summary);
        assert!(out.summary["z_f1"].as_f64().unwrap().abs() <= 3.0);
        assert!(out.summary["z_f2"].as_f64().unwrap().abs() <= 3.0);
        assert_eq!(out.records.len(), 50 * 2 * 2);
    }

    #[test]
    fn execute_rejects_mismatched_kind_and_model() {
        // Bypass config validation to exercise the runner's own guard.
        let cfg: ExperimentConfig = toml::from_str(
            "kind = \"zero_two\"\nseed = 1\n[model]\nname = \"heat\"\n",
        )
        .unwrap();
        let err = execute(&cfg).unwrap_err();
        assert!(err.to_string().contains("cannot run"), "{err}");
    }

    #[test]
    fn outputs_are_identical_across_thread_counts() {
        let text = "kind = \"filter_stability\"\nseed = 21\n[model]\nname = \"mixing3_hmm\"\n[run]\nhorizon = 40\nreplicas = 6\n";
        let cfg = parse_config(text).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| execute(&cfg))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| execute(&cfg))
            .unwrap();
        assert_eq!(render_csv(&single.records), render_csv(&many.records));
        assert_eq!(single.summary, many.summary);
    }

    #[test]
    fn repeated_execution_is_deterministic() {
        let text = "kind = \"coupling_alpha\"\nseed = 4\n[model]\nname = \"heat\"\n[run]\nhorizon = 40\nreplicas = 3\nn_pairs = 2\n";
        let cfg = parse_config(text).unwrap();
        let a = execute(&cfg).unwrap();
        let b = execute(&cfg).unwrap();
        assert_eq!(render_csv(&a.records), render_csv(&b.records));
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.plot_series, b.plot_series);
    }
}
