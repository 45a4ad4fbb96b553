//! Experiment configuration: TOML (or JSON) file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use mmucb::bandit::{ActionSource, Noise, DENSE_ROUND_LIMIT};
use mmucb::{ActionSet, ConfidenceParams, FeatureMap, KernelFunction, MeanFunction, MixtureSpec, Policy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Regret,
    Coverage,
    Widths,
    RadiiCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Regret => "regret",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Widths => "widths",
            ExperimentKind::RadiiCompare => "radii-compare",
        }
    }

    /// Regret and coverage mirror the bandit experiments (sigma = 0.05); the
    /// width and radius studies use sigma = 0.1.
    fn default_sigma(self) -> f64 {
        match self {
            ExperimentKind::Regret | ExperimentKind::Coverage => 0.05,
            ExperimentKind::Widths | ExperimentKind::RadiiCompare => 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Rff,
    RandomLayer,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub input_dim: usize,
    /// Feature dimension `d`.
    pub dim: usize,
    pub lengthscale: f64,
    /// Fixed map seed. Without it every run draws its own map.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { kind: FeatureKind::Rff, input_dim: 2, dim: 20, lengthscale: 1.0, seed: None }
    }
}

impl FeatureConfig {
    fn validate(&self) -> Result<()> {
        ensure!(self.input_dim > 0, "features.input_dim must be positive");
        ensure!(self.dim > 0, "features.dim must be positive");
        ensure!(self.lengthscale > 0.0 && self.lengthscale.is_finite(), "features.lengthscale must be positive");
        if self.kind == FeatureKind::Identity {
            ensure!(self.dim == self.input_dim, "identity features need dim == input_dim");
        }
        self.build(0)?;
        Ok(())
    }

    pub fn build(&self, run_seed: u64) -> mmucb::Result<FeatureMap> {
        let seed = self.seed.unwrap_or(run_seed);
        Ok(match self.kind {
            FeatureKind::Rff => FeatureMap::random_fourier(seed, self.input_dim, self.dim, self.lengthscale)?,
            FeatureKind::RandomLayer => FeatureMap::random_layer(seed, self.input_dim, self.dim)?,
            FeatureKind::Identity => FeatureMap::identity(self.dim)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    /// `N(0, c Phi Phi^T)`.
    Standard,
    /// Adaptive linear-kernel mixture with noise level `beta`.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// Fresh uniform arms in `[0, 1]^input_dim` every round.
    Finite,
    /// The whole unit box.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionConfig {
    pub kind: ActionKind,
    pub arms: usize,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self { kind: ActionKind::Finite, arms: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// Standard deviation (Gaussian) or half-width (uniform). Defaults to the declared sigma.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: NoiseKind::Gaussian, scale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WidthConfig {
    pub input_dim: usize,
    pub lengthscale: f64,
    /// Data-set sizes, each evaluated at `fixed_d`.
    pub ts: Vec<usize>,
    /// Feature dimensions, each evaluated at `fixed_t`.
    pub ds: Vec<usize>,
    pub fixed_d: usize,
    pub fixed_t: usize,
    pub test_points: usize,
}

impl Default for WidthConfig {
    fn default() -> Self {
        Self {
            input_dim: 10,
            lengthscale: 1.0,
            ts: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            ds: vec![1, 2, 5, 10, 20, 50, 100],
            fixed_d: 10,
            fixed_t: 100,
            test_points: 100,
        }
    }
}

impl WidthConfig {
    /// `(d, T)` cells: the `T` sweep at `fixed_d`, then the `d` sweep at `fixed_t`.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells: Vec<(usize, usize)> = self.ts.iter().map(|&t| (self.fixed_d, t)).collect();
        for &d in &self.ds {
            if !cells.contains(&(d, self.fixed_t)) {
                cells.push((d, self.fixed_t));
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the command when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    pub runs: usize,
    pub rounds: usize,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub bound_b: f64,
    pub c: f64,
    /// Regularizer; defaults to `sigma^2 / c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Adaptive-mixture noise level; defaults to `4 sigma^2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub policies: Vec<String>,
    pub mixture: MixtureKind,
    /// Gaussian smoothing bandwidth (in rounds) for the aggregate regret CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_bandwidth: Option<f64>,
    pub out: PathBuf,
    pub features: FeatureConfig,
    pub actions: ActionConfig,
    pub noise: NoiseConfig,
    pub widths: WidthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            runs: 100,
            rounds: 500,
            delta: 0.01,
            sigma: None,
            bound_b: 10.0,
            c: 1.0,
            alpha: None,
            beta: None,
            policies: vec!["cmm".into(), "amm".into(), "oful".into()],
            mixture: MixtureKind::Standard,
            smooth_bandwidth: None,
            out: PathBuf::from("out"),
            features: FeatureConfig::default(),
            actions: ActionConfig::default(),
            noise: NoiseConfig::default(),
            widths: WidthConfig::default(),
        }
    }
}

/// Flags shared by every command; they override values from the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML or JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; run i uses seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for CSV files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Failure probability of the confidence sets.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Sub-Gaussian noise scale.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Norm bound on theta*.
    #[arg(long = "bound-b", global = true)]
    pub bound_b: Option<f64>,
    /// Regularizer of the relaxed ellipsoid (default sigma^2 / c).
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Adds a Gaussian-smoothed reward column to aggregate.csv (bandwidth in rounds).
    #[arg(long = "smooth-bandwidth", global = true)]
    pub smooth_bandwidth: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Parses a `.json` file as JSON; anything else as TOML, falling back to JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text).or_else(|toml_err| Self::from_json(&text).map_err(|_| toml_err))
        };
        parsed.with_context(|| format!("parsing {}", path.display()))
    }

    /// Loads the file named by `--config` (or the defaults), applies the other
    /// flags and validates the result for `kind`.
    pub fn resolve(kind: ExperimentKind, flags: &Overrides) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(k) = cfg.kind {
            ensure!(k == kind, "config is for `{}` but the command is `{}`", k.name(), kind.name());
        }
        cfg.kind = Some(kind);
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = &flags.out {
            cfg.out = v.clone();
        }
        if let Some(v) = flags.delta {
            cfg.delta = v;
        }
        if let Some(v) = flags.sigma {
            cfg.sigma = Some(v);
        }
        if let Some(v) = flags.bound_b {
            cfg.bound_b = v;
        }
        if let Some(v) = flags.alpha {
            cfg.alpha = Some(v);
        }
        if let Some(v) = flags.smooth_bandwidth {
            cfg.smooth_bandwidth = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> ExperimentKind {
        self.kind.unwrap_or(ExperimentKind::Regret)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.experiment().default_sigma())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| self.sigma().powi(2) / self.c)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| 4.0 * self.sigma().powi(2))
    }

    pub fn params(&self) -> Result<ConfidenceParams> {
        Ok(ConfidenceParams::new(self.sigma(), self.bound_b, self.delta)?)
    }

    pub fn policies(&self) -> Result<Vec<Policy>> {
        self.policies.iter().map(|p| Ok(Policy::parse(p, self.alpha())?)).collect()
    }

    pub fn mixture_spec(&self) -> Result<MixtureSpec> {
        Ok(match self.mixture {
            MixtureKind::Standard => MixtureSpec::standard(self.c, self.sigma())?,
            MixtureKind::Adaptive => MixtureSpec::adaptive(
                MeanFunction::Zero,
                KernelFunction::Linear { scale: self.c },
                Some(self.beta()),
                self.sigma(),
            )?,
        })
    }

    pub fn noise(&self) -> Noise {
        let scale = self.noise.scale.unwrap_or_else(|| self.sigma());
        match self.noise.kind {
            NoiseKind::Gaussian => Noise::Gaussian { sigma: scale },
            NoiseKind::Uniform => Noise::Uniform { half_width: scale },
            NoiseKind::None => Noise::None,
        }
    }

    pub fn action_source(&self) -> Result<ActionSource> {
        let n = self.features.input_dim;
        Ok(match self.actions.kind {
            ActionKind::Finite => {
                ActionSource::RandomFinite { arms: self.actions.arms, lower: vec![0.0; n], upper: vec![1.0; n] }
            }
            ActionKind::Box => ActionSource::Fixed { set: ActionSet::boxed(vec![0.0; n], vec![1.0; n])? },
        })
    }

    /// Per-run seeds `seed, seed + 1, ...`.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let positive = |name: &str, v: f64| -> Result<()> {
            ensure!(v > 0.0 && v.is_finite(), "{name} must be positive and finite, got {v}");
            Ok(())
        };
        positive("c", self.c)?;
        positive("alpha", self.alpha())?;
        positive("beta", self.beta())?;
        if let Some(h) = self.smooth_bandwidth {
            positive("smooth_bandwidth", h)?;
        }
        ensure!(self.runs > 0, "runs must be positive");
        ensure!(self.rounds > 0, "rounds must be positive");
        ensure!(!self.policies.is_empty(), "policies must not be empty");
        let policies = self.policies()?;
        for (i, p) in policies.iter().enumerate() {
            ensure!(!policies[..i].contains(p), "policy `{}` listed twice", p.name());
        }
        self.features.validate()?;
        if self.actions.kind == ActionKind::Finite {
            ensure!(self.actions.arms > 0, "actions.arms must be positive");
        }
        let noise = self.noise();
        noise.validate()?;
        ensure!(
            noise.scale() <= self.sigma(),
            "noise scale {} exceeds the declared sigma {}",
            noise.scale(),
            self.sigma()
        );
        if self.mixture == MixtureKind::Adaptive
            && matches!(self.experiment(), ExperimentKind::Regret | ExperimentKind::Coverage | ExperimentKind::RadiiCompare)
            && self.rounds > DENSE_ROUND_LIMIT
        {
            bail!("adaptive mixtures are limited to {DENSE_ROUND_LIMIT} rounds");
        }
        if self.experiment() == ExperimentKind::RadiiCompare && self.rounds > DENSE_ROUND_LIMIT {
            bail!("radii-compare tracks an adaptive mixture and is limited to {DENSE_ROUND_LIMIT} rounds");
        }
        let w = &self.widths;
        ensure!(w.input_dim > 0, "widths.input_dim must be positive");
        positive("widths.lengthscale", w.lengthscale)?;
        ensure!(w.test_points > 0, "widths.test_points must be positive");
        ensure!(w.fixed_d > 0 && w.ds.iter().all(|&d| d > 0), "widths dimensions must be positive");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_bandit_settings() {
        let cfg = ExperimentConfig::resolve(ExperimentKind::Regret, &Overrides::default()).unwrap();
        assert_eq!(cfg.delta, 0.01);
        assert_eq!(cfg.sigma(), 0.05);
        assert_eq!(cfg.bound_b, 10.0);
        assert_eq!(cfg.features.dim, 20);
        assert_eq!(cfg.alpha(), 0.05 * 0.05);
    }

    #[test]
    fn flags_override_file_values() {
        let flags = Overrides { sigma: Some(0.2), seed: Some(9), alpha: Some(0.5), ..Default::default() };
        let cfg = ExperimentConfig::resolve(ExperimentKind::Coverage, &flags).unwrap();
        assert_eq!((cfg.sigma(), cfg.seed, cfg.alpha()), (0.2, 9, 0.5));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("rounds = 5\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[features]\nwidth = 3\n").is_err());
        let bad = ExperimentConfig { delta: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let odd = ExperimentConfig { features: FeatureConfig { dim: 5, ..Default::default() }, ..Default::default() };
        assert!(odd.validate().is_err());
        let loud = ExperimentConfig { noise: NoiseConfig { kind: NoiseKind::Gaussian, scale: Some(1.0) }, ..Default::default() };
        assert!(loud.validate().is_err());
        let twice = ExperimentConfig { policies: vec!["amm".into(), "amm".into()], ..Default::default() };
        assert!(twice.validate().is_err());
    }

    #[test]
    fn widths_cells_cover_both_sweeps() {
        let w = WidthConfig { ts: vec![1, 100], ds: vec![10, 20], ..Default::default() };
        assert_eq!(w.cells(), vec![(10, 1), (10, 100), (20, 100)]);
    }
}
