use super::{ErrorKind, PipelineError};
use crate::algfinder::{AlgebraicConfig, TiebreakPolicy};
use crate::benchgen::{MetricsOptions, SystemSpec};
use crate::sparsereg::{ScoreFunction, SparseFitConfig};
use crate::timeseries::SavgolParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// JSON schema of [`PipelineConfig`].
pub const CONFIG_SCHEMA: &str = include_str!("schema.json");

/// Log-condition tolerance; serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EpsRepr", into = "EpsRepr")]
pub struct Eps(pub f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EpsRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<EpsRepr> for Eps {
    type Error = String;
    fn try_from(r: EpsRepr) -> Result<Self, String> {
        let v = match r {
            EpsRepr::Num(v) => v,
            EpsRepr::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => f64::INFINITY,
                _ => return Err(format!("eps must be a number or \"inf\", got {s:?}")),
            },
        };
        if v.is_nan() || v < 0.0 {
            return Err(format!("eps must be non-negative, got {v}"));
        }
        Ok(Eps(v))
    }
}

impl From<Eps> for EpsRepr {
    fn from(e: Eps) -> Self {
        if e.0.is_infinite() {
            EpsRepr::Text("inf".into())
        } else {
            EpsRepr::Num(e.0)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Eps),
    Many(Vec<Eps>),
}

mod eps_list {
    use super::{Eps, OneOrMany};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Eps], s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Eps>, D::Error> {
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(e) => vec![e],
            OneOrMany::Many(v) => v,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LibrarySpec {
    Polynomial {
        degree: u32,
        #[serde(default = "yes")]
        constant: bool,
        /// Defaults to every table column that is not an alias target.
        #[serde(default)]
        states: Option<Vec<String>>,
    },
    Grid {
        nodes: usize,
        /// 1-based generator nodes; their phases default to second order.
        #[serde(default)]
        generators: Vec<usize>,
        /// Per-node libraries with power-balance targets; `false` uses the full library.
        #[serde(default = "yes")]
        restricted: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiebreakKind {
    #[default]
    LexLargest,
    Seeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraicSection {
    pub k: Option<usize>,
    #[serde(with = "eps_list")]
    pub eps: Vec<Eps>,
    pub score: ScoreFunction,
    pub score_floor: f64,
    pub sparse: SparseFitConfig,
    pub tiebreak: TiebreakKind,
    /// Pivot encodings to eliminate first when complexities tie.
    pub pivot_preference: Vec<String>,
    pub seed: u64,
    pub rank_tol: f64,
}

impl Default for AlgebraicSection {
    fn default() -> Self {
        let base = AlgebraicConfig::default();
        Self {
            k: None,
            eps: base.eps.iter().map(|e| Eps(*e)).collect(),
            score: base.score,
            score_floor: base.score_floor,
            sparse: base.sparse,
            tiebreak: TiebreakKind::LexLargest,
            pivot_preference: Vec::new(),
            seed: 0,
            rank_tol: base.rank_tol,
        }
    }
}

impl AlgebraicSection {
    pub fn finder_config(&self) -> AlgebraicConfig {
        let tiebreak = if !self.pivot_preference.is_empty() {
            TiebreakPolicy::Preference(self.pivot_preference.clone())
        } else {
            match self.tiebreak {
                TiebreakKind::LexLargest => TiebreakPolicy::LexLargest,
                TiebreakKind::Seeded => TiebreakPolicy::Seeded(self.seed),
            }
        };
        AlgebraicConfig {
            k: self.k,
            eps: self.eps.iter().map(|e| e.0).collect(),
            score_floor: self.score_floor,
            sparse: self.sparse,
            score: self.score,
            tiebreak,
            rank_tol: self.rank_tol,
            restriction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub sparse: SparseFitConfig,
    /// Derivative order per state; missing entries are first order.
    pub orders: BTreeMap<String, usize>,
    /// States to keep differential, most wanted first.
    pub preference: Option<Vec<String>>,
    /// Measured first-derivative column per state, e.g. `phi_1 -> dphi_1`.
    pub aliases: BTreeMap<String, String>,
    /// Re-estimate all coefficients by least squares on the final supports.
    pub refit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alpha: Vec<f64>,
    pub threshold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<SystemSpec>,
    pub library: LibrarySpec,
    #[serde(default)]
    pub smoothing: Option<SavgolParams>,
    #[serde(default = "default_derivative")]
    pub derivative: SavgolParams,
    #[serde(default)]
    pub algebraic: AlgebraicSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Reference model file; a generator supplies its own.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub metrics: MetricsOptions,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_derivative() -> SavgolParams {
    SavgolParams {
        window: 9,
        polyorder: 4,
    }
}

fn config_error(message: String) -> PipelineError {
    PipelineError::new("cli", "load_config", ErrorKind::Config, message)
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative `input`, `truth` or `output` resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.input, &mut cfg.truth, &mut cfg.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        match (&self.input, &self.generator) {
            (Some(_), Some(_)) => {
                return Err(config_error("both input and generator given".into()))
            }
            (None, None) => {
                return Err(config_error("one of input or generator is required".into()))
            }
            _ => {}
        }
        if let LibrarySpec::Grid {
            nodes, generators, ..
        } = &self.library
        {
            if *nodes < 2 {
                return Err(config_error(format!(
                    "grid needs at least 2 nodes, got {nodes}"
                )));
            }
            if let Some(g) = generators.iter().find(|g| **g == 0 || **g > *nodes) {
                return Err(config_error(format!(
                    "generator node {g} outside 1..={nodes}"
                )));
            }
        }
        let sg = |p: &SavgolParams, what: &str| {
            if p.window.is_multiple_of(2) || p.window < 3 || p.polyorder >= p.window {
                Err(config_error(format!(
                    "{what}: window {} polyorder {} invalid",
                    p.window, p.polyorder
                )))
            } else {
                Ok(())
            }
        };
        sg(&self.derivative, "derivative")?;
        if let Some(s) = &self.smoothing {
            sg(s, "smoothing")?;
        }
        let max_order = self.dynamics.orders.values().copied().max().unwrap_or(1);
        if self.derivative.polyorder < max_order {
            return Err(config_error(format!(
                "derivative polyorder {} below requested order {max_order}",
                self.derivative.polyorder
            )));
        }
        self.algebraic
            .sparse
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        self.dynamics
            .sparse
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.algebraic.score_floor)
            && self.algebraic.score == ScoreFunction::R2
        {
            return Err(config_error(format!(
                "score_floor {} outside [0, 1]",
                self.algebraic.score_floor
            )));
        }
        if let Some(sw) = &self.sweep {
            if sw.alpha.is_empty() || sw.threshold.is_empty() {
                return Err(config_error("sweep grids must be non-empty".into()));
            }
            if sw
                .alpha
                .iter()
                .chain(&sw.threshold)
                .any(|v| !v.is_finite() || *v < 0.0)
            {
                return Err(config_error(
                    "sweep values must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Overrides every seed in the config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.algebraic.seed = seed;
        if let Some(g) = &mut self.generator {
            match g {
                SystemSpec::Crn { run, .. }
                | SystemSpec::Grid { run, .. }
                | SystemSpec::Pendulum { run, .. } => run.seed = seed,
            }
        }
        self
    }
}
