//! Run configuration, read from TOML and overridden by environment variables
//! and flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedwind_core::autosplit::{ParamGrid, SplitThresholds};
use fedwind_core::forecast::{FilterThresholds, NormConfig, RollingMode, TrainHyper};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// How turbines are grouped before per-group federated training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Auto-split with DRS-seeded federated K-means.
    #[default]
    DrsAuto,
    /// Auto-split with k-means++ seeding.
    KppAuto,
    /// One federated K-means pass with a fixed cluster count.
    FlatFedK,
    /// Geographic K-means with the count chosen by silhouette.
    GeoAuto,
    /// Geographic K-means with a fixed count.
    GeoFixed,
    /// One federated model over the whole fleet.
    SingleGlobal,
    /// One non-federated model on the pooled windows of a single cluster.
    Centralized,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::DrsAuto,
        Method::KppAuto,
        Method::FlatFedK,
        Method::GeoAuto,
        Method::GeoFixed,
        Method::SingleGlobal,
        Method::Centralized,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::DrsAuto => "drs_auto",
            Method::KppAuto => "kpp_auto",
            Method::FlatFedK => "flat_fed_k",
            Method::GeoAuto => "geo_auto",
            Method::GeoFixed => "geo_fixed",
            Method::SingleGlobal => "single_global",
            Method::Centralized => "centralized",
        }
    }

    /// Whether the grouping comes from the Auto-split tree.
    pub fn uses_tree(&self) -> bool {
        matches!(self, Method::DrsAuto | Method::KppAuto | Method::Centralized)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Where the fleet comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A generated fleet: either a `fleet.json` document or the built-in
    /// three-archetype preset seeded by the run seed.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<PathBuf>,
        #[serde(default = "default_turbines")]
        turbines: usize,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    /// Measured data in `series.csv` / `meta.csv` form.
    Files { series: PathBuf, meta: PathBuf },
}

fn default_turbines() -> usize {
    120
}

fn default_steps() -> usize {
    8760
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: None,
            turbines: default_turbines(),
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub k: usize,
    pub n_clients: usize,
    pub c_rounds: usize,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self {
            k: 6,
            n_clients: 3,
            c_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub thresholds: SplitThresholds,
    pub grid: ParamGrid,
    pub standardise_zero_ratio: bool,
    /// Skip forecasting for turbines in outlier leaves.
    pub exclude_outliers: bool,
    pub flat: FlatConfig,
    /// Group count for `geo_fixed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geo_k: Option<usize>,
    /// Leaf (dense id) whose turbines the `centralized` baseline uses; the
    /// largest non-outlier leaf when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centralized_group: Option<usize>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            thresholds: SplitThresholds::default(),
            grid: ParamGrid::default(),
            standardise_zero_ratio: true,
            exclude_outliers: true,
            flat: FlatConfig::default(),
            geo_k: None,
            centralized_group: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub enabled: bool,
    pub min_max: f64,
    pub min_std: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let th = FilterThresholds::default();
        Self {
            enabled: true,
            min_max: th.min_max,
            min_std: th.min_std,
        }
    }
}

impl FilterConfig {
    pub fn thresholds(&self) -> FilterThresholds {
        FilterThresholds {
            min_max: self.min_max,
            min_std: self.min_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub mode: RollingMode,
    pub horizon: usize,
    /// Turbines to forecast; by default the first trained client of every
    /// group.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            mode: RollingMode::TeacherForced,
            horizon: 24,
            ids: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Keep only this many spatially close turbines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    /// Training hyperparameters. `hyper.seed` is replaced by the run seed.
    #[serde(default)]
    pub hyper: TrainHyper,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_train_fraction() -> f64 {
    0.7
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            method: Method::default(),
            out: default_out(),
            subsample: None,
            train_fraction: default_train_fraction(),
            data: DataSource::default(),
            clustering: ClusteringConfig::default(),
            hyper: TrainHyper::default(),
            filter: FilterConfig::default(),
            norm: NormConfig::default(),
            forecast: ForecastConfig::default(),
        }
    }
}

/// Overrides applied on top of the file, in increasing precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub out: Option<PathBuf>,
    pub mode: Option<RollingMode>,
}

pub const ENV_PREFIX: &str = "FEDWIND_";

impl Overrides {
    /// Reads `FEDWIND_SEED`, `FEDWIND_METHOD`, `FEDWIND_OUT` and `FEDWIND_MODE`
    /// through `lookup`.
    pub fn from_env_with(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let var = |name: &str| lookup(&format!("{ENV_PREFIX}{name}"));
        let bad = |name: &str, msg: String| CliError::Config(format!("{ENV_PREFIX}{name}: {msg}"));
        Ok(Self {
            seed: var("SEED")
                .map(|v| v.parse::<u64>().map_err(|e| bad("SEED", e.to_string())))
                .transpose()?,
            method: var("METHOD").map(|v| v.parse().map_err(|e| bad("METHOD", e))).transpose()?,
            out: var("OUT").map(PathBuf::from),
            mode: var("MODE").map(|v| v.parse().map_err(|e| bad("MODE", e))).transpose()?,
        })
    }

    pub fn from_env() -> Result<Self, CliError> {
        Self::from_env_with(|k| std::env::var(k).ok())
    }

    /// `other` wins wherever it is set.
    pub fn then(self, other: Overrides) -> Overrides {
        Overrides {
            seed: other.seed.or(self.seed),
            method: other.method.or(self.method),
            out: other.out.or(self.out),
            mode: other.mode.or(self.mode),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.data {
            DataSource::Synthetic { spec: Some(p), .. } => fix(p),
            DataSource::Synthetic { spec: None, .. } => {}
            DataSource::Files { series, meta } => {
                fix(series);
                fix(meta);
            }
        }
        Ok(cfg)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(m) = o.mode {
            self.forecast.mode = m;
        }
        self
    }

    /// Checks cross-field requirements and pins derived values.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.hyper.seed = self.seed;
        let fail = |m: String| Err(CliError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.method == Method::GeoFixed && self.clustering.geo_k.is_none() {
            return fail("method geo_fixed needs clustering.geo_k".into());
        }
        if self.clustering.geo_k == Some(0) {
            return fail("clustering.geo_k must be at least 1".into());
        }
        if self.forecast.horizon == 0 {
            return fail("forecast.horizon must be at least 1".into());
        }
        if let DataSource::Synthetic { spec: None, turbines, steps } = &self.data {
            if *turbines < 2 || *steps < 2 {
                return fail("synthetic preset needs at least 2 turbines and 2 steps".into());
            }
        }
        self.clustering.thresholds.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.clustering.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.method = Method::GeoFixed;
        cfg.clustering.geo_k = Some(7);
        cfg.data = DataSource::Files {
            series: "s.csv".into(),
            meta: "m.csv".into(),
        };
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_mixed_sources() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        let mixed = "[data]\nsource = \"files\"\nseries = \"a\"\nmeta = \"b\"\nturbines = 3\n";
        assert!(RunConfig::from_toml(mixed).is_err());
    }

    #[test]
    fn geo_fixed_needs_group_count() {
        let cfg = RunConfig {
            method: Method::GeoFixed,
            ..Default::default()
        };
        assert!(cfg.clone().resolve().is_err());
        let mut ok = cfg;
        ok.clustering.geo_k = Some(3);
        assert!(ok.resolve().is_ok());
    }

    #[test]
    fn precedence_file_env_flags() {
        let file = RunConfig::from_toml("seed = 1\nmethod = \"kpp_auto\"").unwrap();
        let env = Overrides::from_env_with(|k| match k {
            "FEDWIND_SEED" => Some("2".into()),
            "FEDWIND_MODE" => Some("recursive".into()),
            _ => None,
        })
        .unwrap();
        let flags = Overrides {
            seed: Some(3),
            ..Default::default()
        };
        let cfg = file.apply(&env.then(flags));
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.method, Method::KppAuto);
        assert_eq!(cfg.forecast.mode, RollingMode::Recursive);
        assert!(Overrides::from_env_with(|_| Some("x".into())).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
