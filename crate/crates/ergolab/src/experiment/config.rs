//! TOML experiment configuration: schema, parsing with line-anchored
//! messages, and full cross-field validation (including model construction,
//! so dynamical assumptions like the forcing-set checks fire before any run).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// The eight experiment kinds the runner understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ZeroTwo,
    LocalMixing,
    BetaDecay,
    ConditionalInheritance,
    FilterStability,
    CouplingAlpha,
    HellingerCheck,
    GammaErgodicity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::ZeroTwo,
        ExperimentKind::LocalMixing,
        ExperimentKind::BetaDecay,
        ExperimentKind::ConditionalInheritance,
        ExperimentKind::FilterStability,
        ExperimentKind::CouplingAlpha,
        ExperimentKind::HellingerCheck,
        ExperimentKind::GammaErgodicity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ZeroTwo => "zero_two",
            ExperimentKind::LocalMixing => "local_mixing",
            ExperimentKind::BetaDecay => "beta_decay",
            ExperimentKind::ConditionalInheritance => "conditional_inheritance",
            ExperimentKind::FilterStability => "filter_stability",
            ExperimentKind::CouplingAlpha => "coupling_alpha",
            ExperimentKind::HellingerCheck => "hellinger_check",
            ExperimentKind::GammaErgodicity => "gamma_ergodicity",
        }
    }

    /// One-line description for the catalog listing.
    pub fn describe(&self) -> &'static str {
        match self {
            ExperimentKind::ZeroTwo => {
                "worst-pair projected window TV trace and the merge/stay-apart verdict"
            }
            ExperimentKind::LocalMixing => {
                "coordinate-window mixing of a product chain vs the full joint law"
            }
            ExperimentKind::BetaDecay => "absolute-regularity coefficient over increasing lags",
            ExperimentKind::ConditionalInheritance => {
                "worst-pair conditional TV over lags across sampled observation paths"
            }
            ExperimentKind::FilterStability => {
                "distance between two filters started from different priors, per step"
            }
            ExperimentKind::CouplingAlpha => {
                "tail-sum coupling verdicts and the estimated coupling probability"
            }
            ExperimentKind::HellingerCheck => {
                "observation Hellinger gap against squared state distance over random pairs"
            }
            ExperimentKind::GammaErgodicity => {
                "filter-chain moment agreement from two initializations"
            }
        }
    }

    /// Run-table parameter names this kind accepts, for catalog listings.
    pub fn run_parameters(&self) -> &'static [&'static str] {
        RunConfig::allowed_params(*self)
    }

    /// Model names this kind accepts.
    pub fn supported_models(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::ZeroTwo => &["two_state_flip", "product_flip", "periodic2"],
            ExperimentKind::LocalMixing => &["product_flip"],
            ExperimentKind::BetaDecay => &["two_state_flip", "product_flip", "periodic2"],
            ExperimentKind::ConditionalInheritance | ExperimentKind::GammaErgodicity => &[
                "mixing3_hmm",
                "revealing_hmm",
                "flat_hmm",
                "parity_degenerate_hmm",
            ],
            ExperimentKind::FilterStability => &[
                "mixing3_hmm",
                "revealing_hmm",
                "flat_hmm",
                "parity_degenerate_hmm",
                "heat",
                "ns",
                "spin",
                "delay",
            ],
            ExperimentKind::CouplingAlpha | ExperimentKind::HellingerCheck => {
                &["heat", "ns", "spin", "delay"]
            }
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

/// One forced Fourier mode of the vorticity model.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingEntry {
    pub k: [i32; 2],
    pub amplitude: f64,
}

/// Model selector plus its parameter table. Every parameter is optional;
/// unset values fall back to the model's desk defaults. Parameters that do
/// not apply to the named model are rejected during validation.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Flip probability (two_state_flip, product_flip).
    #[serde(default)]
    pub p: Option<f64>,
    /// Emission accuracy 1−ε (revealing_hmm).
    #[serde(default)]
    pub eps: Option<f64>,
    /// Number of independent coordinates (product_flip).
    #[serde(default)]
    pub width: Option<usize>,
    /// Retained sine modes (heat).
    #[serde(default)]
    pub modes: Option<usize>,
    /// Observation noise variance (heat).
    #[serde(default)]
    pub obs_var: Option<f64>,
    /// Spectral grid side (ns).
    #[serde(default)]
    pub grid: Option<usize>,
    /// Viscosity (ns).
    #[serde(default)]
    pub nu: Option<f64>,
    /// Forced mode set (ns).
    #[serde(default)]
    pub forcing: Option<Vec<ForcingEntry>>,
    /// Ring size (spin).
    #[serde(default)]
    pub sites: Option<usize>,
    /// Inverse temperature (spin).
    #[serde(default)]
    pub beta: Option<f64>,
    /// Linear damping (delay).
    #[serde(default)]
    pub a: Option<f64>,
    /// Delayed feedback amplitude (delay).
    #[serde(default)]
    pub b: Option<f64>,
}

impl ModelConfig {
    fn set_params(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.p.is_some() {
            out.push("p");
        }
        if self.eps.is_some() {
            out.push("eps");
        }
        if self.width.is_some() {
            out.push("width");
        }
        if self.modes.is_some() {
            out.push("modes");
        }
        if self.obs_var.is_some() {
            out.push("obs_var");
        }
        if self.grid.is_some() {
            out.push("grid");
        }
        if self.nu.is_some() {
            out.push("nu");
        }
        if self.forcing.is_some() {
            out.push("forcing");
        }
        if self.sites.is_some() {
            out.push("sites");
        }
        if self.beta.is_some() {
            out.push("beta");
        }
        if self.a.is_some() {
            out.push("a");
        }
        if self.b.is_some() {
            out.push("b");
        }
        out
    }

    fn allowed_params(name: &str) -> &'static [&'static str] {
        match name {
            "two_state_flip" => &["p"],
            "product_flip" => &["p", "width"],
            "periodic2" | "mixing3_hmm" | "flat_hmm" | "parity_degenerate_hmm" => &[],
            "revealing_hmm" => &["eps"],
            "heat" => &["modes", "obs_var"],
            "ns" => &["grid", "nu", "forcing"],
            "spin" => &["sites", "beta"],
            "delay" => &["a", "b"],
            _ => &[],
        }
    }
}

/// Execution knobs. All optional: each kind applies its own defaults.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon T: steps, lags, or chain length depending on the kind.
    pub horizon: Option<usize>,
    /// Independent repetitions where the kind supports them.
    pub replicas: Option<usize>,
    /// Lags at which conditional TV is tabulated (conditional_inheritance).
    pub lags: Option<Vec<usize>>,
    /// Observation paths to sample (conditional_inheritance).
    pub n_paths: Option<usize>,
    /// Tail-sum success threshold (coupling_alpha).
    pub epsilon: Option<f64>,
    /// Random initial pairs (coupling_alpha, hellinger_check).
    pub n_pairs: Option<usize>,
    /// Particle count for cloud filters (filter_stability on dynamics).
    pub particles: Option<usize>,
    /// Cloud subsample cap before BL evaluation (filter_stability).
    pub subsample: Option<usize>,
    /// Projection / observation-window coordinates (zero_two, local_mixing,
    /// filter_stability on the spin ring).
    pub coordinates: Option<Vec<usize>>,
    /// Dichotomy threshold: merged when window TV ≤ 2 − alpha (zero_two,
    /// local_mixing).
    pub alpha: Option<f64>,
    /// Window growth cap for projected path laws (zero_two, local_mixing).
    pub k_window: Option<usize>,
    /// Decay verdict threshold (conditional_inheritance, beta_decay).
    pub threshold: Option<f64>,
    /// Coupling verdict threshold on alpha_hat (coupling_alpha).
    pub alpha_threshold: Option<f64>,
    /// Re-run coupling_alpha at twice the horizon and report both.
    pub double_horizon: Option<bool>,
}

impl RunConfig {
    fn set_params(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.horizon.is_some() {
            out.push("horizon");
        }
        if self.replicas.is_some() {
            out.push("replicas");
        }
        if self.lags.is_some() {
            out.push("lags");
        }
        if self.n_paths.is_some() {
            out.push("n_paths");
        }
        if self.epsilon.is_some() {
            out.push("epsilon");
        }
        if self.n_pairs.is_some() {
            out.push("n_pairs");
        }
        if self.particles.is_some() {
            out.push("particles");
        }
        if self.subsample.is_some() {
            out.push("subsample");
        }
        if self.coordinates.is_some() {
            out.push("coordinates");
        }
        if self.alpha.is_some() {
            out.push("alpha");
        }
        if self.k_window.is_some() {
            out.push("k_window");
        }
        if self.threshold.is_some() {
            out.push("threshold");
        }
        if self.alpha_threshold.is_some() {
            out.push("alpha_threshold");
        }
        if self.double_horizon.is_some() {
            out.push("double_horizon");
        }
        out
    }

    fn allowed_params(kind: ExperimentKind) -> &'static [&'static str] {
        match kind {
            ExperimentKind::ZeroTwo => &["horizon", "coordinates", "alpha", "k_window"],
            ExperimentKind::LocalMixing => &["horizon", "coordinates", "alpha", "k_window"],
            ExperimentKind::BetaDecay => &["horizon", "threshold"],
            ExperimentKind::ConditionalInheritance => {
                &["horizon", "lags", "n_paths", "threshold"]
            }
            ExperimentKind::FilterStability => {
                &["horizon", "replicas", "particles", "subsample", "coordinates"]
            }
            ExperimentKind::CouplingAlpha => &[
                "horizon",
                "replicas",
                "epsilon",
                "n_pairs",
                "alpha_threshold",
                "double_horizon",
            ],
            ExperimentKind::HellingerCheck => &["n_pairs"],
            ExperimentKind::GammaErgodicity => &["horizon", "replicas"],
        }
    }
}

/// A full experiment description. `seed` is mandatory: runs are reproducible
/// by construction and never fall back to wall-clock entropy.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub plot: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Full cross-field validation: kind/model compatibility, parameter
    /// applicability, and eager model construction so dynamical assumptions
    /// (spin reversibility/attractiveness, forcing-set lattice generation)
    /// are checked before any run starts.
    pub fn validate(&self) -> Result<()> {
        let name = self.model.name.as_str();
        if !self.kind.supported_models().contains(&name) {
            return Err(Error::InvalidInput(format!(
                "experiment `{}` does not support model `{}` (supported: {})",
                self.kind,
                name,
                self.kind.supported_models().join(", ")
            )));
        }
        let allowed = ModelConfig::allowed_params(name);
        for param in self.model.set_params() {
            if !allowed.contains(&param) {
                return Err(Error::InvalidInput(format!(
                    "model parameter `{param}` does not apply to model `{name}`"
                )));
            }
        }
        let allowed = RunConfig::allowed_params(self.kind);
        for param in self.run.set_params() {
            if !allowed.contains(&param) {
                return Err(Error::InvalidInput(format!(
                    "run parameter `{param}` does not apply to experiment `{}`",
                    self.kind
                )));
            }
        }
        if let Some(h) = self.run.horizon {
            if h < 2 {
                return Err(Error::InvalidInput(format!(
                    "run horizon {h} is too short to measure anything"
                )));
            }
        }
        if let Some(r) = self.run.replicas {
            if r == 0 {
                return Err(Error::InvalidInput("run replicas must be positive".into()));
            }
        }
        if let Some(e) = self.run.epsilon {
            if !(e > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tail threshold epsilon {e} must be positive"
                )));
            }
        }
        if let Some(coords) = &self.run.coordinates {
            if coords.is_empty() {
                return Err(Error::InvalidInput("coordinates must be nonempty".into()));
            }
            let applies = match self.kind {
                ExperimentKind::ZeroTwo | ExperimentKind::LocalMixing => name == "product_flip",
                ExperimentKind::FilterStability => name == "spin",
                _ => false,
            };
            if !applies {
                return Err(Error::InvalidInput(format!(
                    "run parameter `coordinates` does not apply to model `{name}` under \
                     experiment `{}`",
                    self.kind
                )));
            }
        }
        if self.kind == ExperimentKind::CouplingAlpha
            && name == "spin"
            && self.run.n_pairs.is_some()
        {
            return Err(Error::InvalidInput(
                "n_pairs does not apply to the spin ring: the extreme ordered pair dominates \
                 every ordered pair under the monotone coupling"
                    .into(),
            ));
        }
        if self.formats.is_empty() && !self.plot {
            return Err(Error::InvalidInput(
                "no output requested: formats is empty and plot is off".into(),
            ));
        }
        // Eager model construction surfaces every constructor-level check.
        crate::experiment::runners::build_model(&self.model)?;
        Ok(())
    }
}

/// Parameter names accepted by a model, for catalog listings.
pub fn model_parameters(name: &str) -> &'static [&'static str] {
    ModelConfig::allowed_params(name)
}

/// Parse a TOML string. Schema violations come back with the line and column
/// from the TOML parser; semantic violations name the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::InvalidInput(msg) => {
            Error::InvalidInput(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str, model: &str) -> String {
        format!("kind = \"{kind}\"\nseed = 7\n\n[model]\nname = \"{model}\"\n")
    }

    #[test]
    fn minimal_configs_parse_for_every_kind() {
        let pairs = [
            ("zero_two", "product_flip"),
            ("local_mixing", "product_flip"),
            ("beta_decay", "two_state_flip"),
            ("conditional_inheritance", "mixing3_hmm"),
            ("filter_stability", "mixing3_hmm"),
            ("coupling_alpha", "heat"),
            ("hellinger_check", "delay"),
            ("gamma_ergodicity", "mixing3_hmm"),
        ];
        for (kind, model) in pairs {
            let cfg = parse_config(&minimal(kind, model)).unwrap();
            assert_eq!(cfg.kind.as_str(), kind);
            assert_eq!(cfg.model.name, model);
            assert_eq!(cfg.seed, 7);
            assert_eq!(cfg.formats, vec![OutputFormat::Csv, OutputFormat::Json]);
        }
    }

    #[test]
    fn missing_seed_error_names_the_field() {
        let err = parse_config("kind = \"beta_decay\"\n[model]\nname = \"periodic2\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_config("kind = \"beta_decay\"\nseed = \"not a number\"\n[model]\nname = \"periodic2\"\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "kind = \"beta_decay\"\nseed = 1\nbogus = 3\n[model]\nname = \"periodic2\"\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn kind_model_compatibility_is_enforced() {
        let err = parse_config(&minimal("zero_two", "heat")).unwrap_err();
        assert!(err.to_string().contains("does not support"), "{err}");
        let err = parse_config(&minimal("coupling_alpha", "mixing3_hmm")).unwrap_err();
        assert!(err.to_string().contains("does not support"), "{err}");
    }

    #[test]
    fn inapplicable_parameters_are_rejected() {
        let mut text = minimal("coupling_alpha", "heat");
        text.push_str("beta = 0.4\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("`beta`"), "{err}");

        let mut text = minimal("hellinger_check", "heat");
        text.push_str("\n[run]\nhorizon = 50\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("`horizon`"), "{err}");
    }

    #[test]
    fn bad_forcing_set_error_cites_the_lattice_assumption() {
        let text = "kind = \"coupling_alpha\"\nseed = 3\n\n[model]\nname = \"ns\"\nforcing = [\n  { k = [2, 0], amplitude = 1.0 },\n  { k = [-2, 0], amplitude = 1.0 },\n]\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("lattice"), "{err}");
    }

    #[test]
    fn model_constructor_failures_surface_in_validation() {
        let mut text = minimal("coupling_alpha", "delay");
        text.push_str("a = -1.0\n");
        assert!(parse_config(&text).is_err());
    }
}
