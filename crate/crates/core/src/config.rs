//! Run configuration shared by the command-line tool and the HTTP service.
//!
//! A configuration is one JSON document with the sections `priors`,
//! `design`, `study` and `output`. Unknown keys are rejected everywhere and
//! errors name the offending field by its dotted path.

use schemars::gen::SchemaGenerator;
use schemars::schema::Schema;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assurance::{DesignSpec, Measure, PriorSet, DEFAULT_CAP};
use crate::beta::{BetaParams, ContingencyTable};
use crate::comparators::{GridSpec, WidthStudySpec};
use crate::error::{Error, Result};
use crate::interval::{IntervalSpec, Sidedness};
use crate::robustness::{ConflictLevels, PriorOrigin, PriorSlot, DEFAULT_ANGLES};

/// Default distance for the sensitivity contour, equivalent to a 0.1 shift
/// in the mean of a standard normal.
pub const DEFAULT_EPSILON: f64 = 0.00354;

/// Default largest sample size on an assurance curve.
pub const DEFAULT_NT_MAX: u64 = 200;

/// A beta prior given by its shapes, by a mean and effective sample size, or
/// as an initial prior updated by earlier-stage counts.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Shape {
        a: f64,
        b: f64,
    },
    MeanEss {
        mean: f64,
        ess: f64,
    },
    Update {
        base: Box<PriorSpec>,
        successes: u64,
        failures: u64,
        discount: f64,
    },
}

/// Wire form of [`PriorSpec`]: exactly one of `{a, b}`, `{mean, ess}` or
/// `{base, successes, failures[, discount]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
struct PriorSpecWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Box<PriorSpecWire>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    successes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failures: Option<u64>,
    /// Power-prior weight on the counts; 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    discount: Option<f64>,
}

impl TryFrom<PriorSpecWire> for PriorSpec {
    type Error = String;

    fn try_from(w: PriorSpecWire) -> std::result::Result<Self, String> {
        let shape = w.a.is_some() || w.b.is_some();
        let moments = w.mean.is_some() || w.ess.is_some();
        let update = w.base.is_some()
            || w.successes.is_some()
            || w.failures.is_some()
            || w.discount.is_some();
        match (shape, moments, update) {
            (true, false, false) => match (w.a, w.b) {
                (Some(a), Some(b)) => Ok(PriorSpec::Shape { a, b }),
                _ => Err("a prior given by shapes needs both `a` and `b`".into()),
            },
            (false, true, false) => match (w.mean, w.ess) {
                (Some(mean), Some(ess)) => Ok(PriorSpec::MeanEss { mean, ess }),
                _ => Err("a prior given by moments needs both `mean` and `ess`".into()),
            },
            (false, false, true) => match (w.base, w.successes, w.failures) {
                (Some(base), Some(successes), Some(failures)) => Ok(PriorSpec::Update {
                    base: Box::new(PriorSpec::try_from(*base)?),
                    successes,
                    failures,
                    discount: w.discount.unwrap_or(1.0),
                }),
                _ => Err("an updated prior needs `base`, `successes` and `failures`".into()),
            },
            _ => Err(
                "give a prior as exactly one of {a, b}, {mean, ess} or {base, successes, failures}"
                    .into(),
            ),
        }
    }
}

impl From<&PriorSpec> for PriorSpecWire {
    fn from(p: &PriorSpec) -> Self {
        match p {
            PriorSpec::Shape { a, b } => PriorSpecWire {
                a: Some(*a),
                b: Some(*b),
                ..Default::default()
            },
            PriorSpec::MeanEss { mean, ess } => PriorSpecWire {
                mean: Some(*mean),
                ess: Some(*ess),
                ..Default::default()
            },
            PriorSpec::Update {
                base,
                successes,
                failures,
                discount,
            } => PriorSpecWire {
                base: Some(Box::new(base.as_ref().into())),
                successes: Some(*successes),
                failures: Some(*failures),
                discount: Some(*discount),
                ..Default::default()
            },
        }
    }
}

impl Serialize for PriorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PriorSpecWire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = PriorSpecWire::deserialize(d)?;
        PriorSpec::try_from(wire).map_err(serde::de::Error::custom)
    }
}

impl JsonSchema for PriorSpec {
    fn schema_name() -> String {
        "PriorSpec".into()
    }

    fn json_schema(gen: &mut SchemaGenerator) -> Schema {
        PriorSpecWire::json_schema(gen)
    }
}

impl PriorSpec {
    pub fn shape(a: f64, b: f64) -> Self {
        PriorSpec::Shape { a, b }
    }

    /// The prior's shape pair and, for an updated prior, its origin.
    pub fn resolve(&self, field: &str) -> Result<(BetaParams, Option<PriorOrigin>)> {
        let bad = |e: Error| Error::config(field, strip_domain(e));
        match self {
            PriorSpec::Shape { a, b } => Ok((BetaParams::new(*a, *b).map_err(bad)?, None)),
            PriorSpec::MeanEss { mean, ess } => {
                Ok((BetaParams::from_mean_ess(*mean, *ess).map_err(bad)?, None))
            }
            PriorSpec::Update {
                base,
                successes,
                failures,
                discount,
            } => {
                let (base, _) = base.resolve(&format!("{field}.base"))?;
                let origin = PriorOrigin {
                    base,
                    successes: *successes,
                    failures: *failures,
                    discount: *discount,
                };
                Ok((origin.updated(base).map_err(bad)?, Some(origin)))
            }
        }
    }
}

fn strip_domain(e: Error) -> String {
    match e {
        Error::Domain(m) => m,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PriorsConfig {
    /// Design prior for the sensitivity.
    pub sens: PriorSpec,
    /// Design prior for the specificity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PriorSpec>,
    /// Design prior for the prevalence.
    pub prev: PriorSpec,
    /// Analysis prior for the sensitivity; the design prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_sens: Option<PriorSpec>,
    /// Analysis prior for the specificity; the design prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_spec: Option<PriorSpec>,
}

/// Updates recorded by priors given as base plus counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorOrigins {
    pub sens: Option<PriorOrigin>,
    pub spec: Option<PriorOrigin>,
    pub prev: Option<PriorOrigin>,
}

impl PriorOrigins {
    pub fn get(&self, slot: PriorSlot) -> Option<PriorOrigin> {
        match slot {
            PriorSlot::Sens => self.sens,
            PriorSlot::Spec => self.spec,
            PriorSlot::Prev => self.prev,
        }
    }
}

impl PriorsConfig {
    pub fn resolve(&self) -> Result<(PriorSet, PriorOrigins)> {
        let (sens, sens_origin) = self.sens.resolve("priors.sens")?;
        let (prev, prev_origin) = self.prev.resolve("priors.prev")?;
        let mut set = PriorSet::new(sens, prev);
        let mut origins = PriorOrigins {
            sens: sens_origin,
            prev: prev_origin,
            spec: None,
        };
        if let Some(spec) = &self.spec {
            let (p, o) = spec.resolve("priors.spec")?;
            set = set.with_spec(p);
            origins.spec = o;
        }
        if let Some(p) = &self.analysis_sens {
            set = set.with_analysis_sens(p.resolve("priors.analysis_sens")?.0);
        }
        if let Some(p) = &self.analysis_spec {
            set = set.with_analysis_spec(p.resolve("priors.analysis_spec")?.0);
        }
        Ok((set, origins))
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_assurance() -> f64 {
    0.8
}

fn default_measure() -> Measure {
    Measure::Sensitivity
}

fn default_sided() -> Sidedness {
    Sidedness::TwoSided
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "default_measure")]
    pub measure: Measure,
    /// Width target for the sensitivity interval.
    pub width: f64,
    /// Width target for the specificity interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_spec: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_sided")]
    pub sided: Sidedness,
    /// Required assurance.
    #[serde(default = "default_assurance")]
    pub assurance: f64,
}

impl DesignConfig {
    pub fn resolve(&self) -> Result<DesignSpec> {
        let interval = IntervalSpec::new(self.alpha, self.sided)
            .map_err(|e| Error::config("design.alpha", strip_domain(e)))?;
        DesignSpec::new(
            self.measure,
            self.width,
            self.width_spec,
            interval,
            self.assurance,
        )
    }
}

fn default_vary() -> Vec<PriorSlot> {
    vec![PriorSlot::Sens, PriorSlot::Prev]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    /// Priors to perturb, one report each.
    pub vary: Vec<PriorSlot>,
    pub epsilon: f64,
    pub n_angles: usize,
    /// Sample size at which assurance is reported; the base n* when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_eval: Option<u64>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            vary: default_vary(),
            epsilon: DEFAULT_EPSILON,
            n_angles: DEFAULT_ANGLES,
            nt_eval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictConfig {
    /// Observed accuracy-study table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<ContingencyTable>,
    pub suspect: f64,
    pub conflict: f64,
}

impl Default for ConflictConfig {
    fn default() -> Self {
        let l = ConflictLevels::default();
        ConflictConfig {
            observed: None,
            suspect: l.suspect,
            conflict: l.conflict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// Sample sizes over a sensitivity/prevalence grid.
    #[default]
    Grid,
    /// Realised interval widths under repeated design and analysis.
    Width,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub mode: CompareMode,
    pub grid: GridSpec,
    pub width: WidthStudySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Seed for every simulation; overrides the comparison seeds when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Largest sample size a search visits.
    pub cap: u64,
    /// Largest sample size on an assurance curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_max: Option<u64>,
    pub sensitivity: SensitivityConfig,
    pub conflict: ConflictConfig,
    pub compare: CompareConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: None,
            cap: DEFAULT_CAP,
            nt_max: None,
            sensitivity: SensitivityConfig::default(),
            conflict: ConflictConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: OutputFormat,
    /// File to write; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses a configuration document.
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    /// Builds a configuration from an already parsed JSON value.
    pub fn from_value(value: Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(path_error)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn prior_set(&self) -> Result<(PriorSet, PriorOrigins)> {
        self.priors
            .as_ref()
            .ok_or_else(|| Error::config("priors", "this command needs a `priors` section"))?
            .resolve()
    }

    pub fn design_spec(&self) -> Result<DesignSpec> {
        self.design
            .as_ref()
            .ok_or_else(|| Error::config("design", "this command needs a `design` section"))?
            .resolve()
    }

    pub fn conflict_levels(&self) -> Result<ConflictLevels> {
        let l = ConflictLevels {
            suspect: self.study.conflict.suspect,
            conflict: self.study.conflict.conflict,
        };
        l.validate()?;
        Ok(l)
    }

    /// Comparison grid with the study seed applied.
    pub fn grid_spec(&self) -> GridSpec {
        let mut g = self.study.compare.grid.clone();
        if let Some(seed) = self.study.seed {
            g.seed = seed;
        }
        g
    }

    /// Width study with the study seed applied.
    pub fn width_spec(&self) -> WidthStudySpec {
        let mut w = self.study.compare.width.clone();
        if let Some(seed) = self.study.seed {
            w.seed = seed;
        }
        w
    }
}

/// Parses a JSON document, naming the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
    de.end().map_err(|e| Error::config("", e.to_string()))?;
    Ok(value)
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let field = if path == "." { String::new() } else { path };
    Error::config(field, e.into_inner().to_string())
}

/// Sets `path` (dot separated) in a JSON object tree, creating objects on
/// the way. Used to lay command-line flags over a configuration file.
pub fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Default::default());
        }
        let map = cur.as_object_mut().expect("object ensured above");
        if parts.peek().is_none() {
            map.insert(key.to_string(), value);
            return;
        }
        cur = map
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
}
