//! Pipeline configuration, read from JSON with paths relative to the file.

use std::path::{Path, PathBuf};

use hazardscope::changepoint::{CpdConfig, CpdMode, Gamma, KernelSpec, Penalty};
use hazardscope::hazards::{
    BaseStrategy, DisplacementMeasure, ExtentMeasure, HazardConfig, HazardFilter, TrajectoryRule, Whitelist,
    DEFAULT_WHITELIST,
};
use hazardscope::optical_flow::FlowParams;
use hazardscope::reaction::DEFAULT_MIN_WINDOW;
use hazardscope::signals::SignalKind;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

pub const CAPTIONER_URL_ENV: &str = "HAZARDSCOPE_CAPTIONER_URL";
pub const CLASSIFIER_URL_ENV: &str = "HAZARDSCOPE_CLASSIFIER_URL";
pub const DEFAULT_SLOTS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Or,
    And,
    Mean,
}

/// How the driver-state series is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionStrategy {
    ObjectSize,
    OpticalFlow,
    Baseline,
    Ensemble(Combine),
}

impl ReactionStrategy {
    pub fn parse(name: &str) -> Result<Self, PipelineError> {
        let n = name.trim().to_ascii_lowercase().replace(' ', "");
        Ok(match n.as_str() {
            "object_size" => Self::ObjectSize,
            "optical_flow" => Self::OpticalFlow,
            "baseline" => Self::Baseline,
            "ensemble(or)" | "ensemble_or" => Self::Ensemble(Combine::Or),
            "ensemble(and)" | "ensemble_and" => Self::Ensemble(Combine::And),
            "ensemble(mean)" | "ensemble_mean" => Self::Ensemble(Combine::Mean),
            _ => {
                return Err(PipelineError::Config(format!(
                    "unknown reaction strategy {name:?}; expected object_size, optical_flow, baseline or ensemble(or|and|mean)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ObjectSize => "object_size",
            Self::OpticalFlow => "optical_flow",
            Self::Baseline => "baseline",
            Self::Ensemble(Combine::Or) => "ensemble(or)",
            Self::Ensemble(Combine::And) => "ensemble(and)",
            Self::Ensemble(Combine::Mean) => "ensemble(mean)",
        }
    }
}

/// Parses `all` or `nearest_k(K)`.
pub fn parse_base_strategy(name: &str) -> Result<BaseStrategy, PipelineError> {
    let n = name.trim().to_ascii_lowercase().replace(' ', "");
    if n == "all" || n == "all_tracks" {
        return Ok(BaseStrategy::AllTracks);
    }
    let k = n
        .strip_prefix("nearest_k(")
        .and_then(|r| r.strip_suffix(')'))
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| {
            PipelineError::Config(format!(
                "unknown hazard base strategy {name:?}; expected all or nearest_k(K) with K >= 1"
            ))
        })?;
    Ok(BaseStrategy::NearestK(k))
}

fn base_strategy_name(b: BaseStrategy) -> String {
    match b {
        BaseStrategy::AllTracks => "all".into(),
        BaseStrategy::NearestK(k) => format!("nearest_k({k})"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalName {
    ObjectSize,
    OpticalFlow,
    MedianDistance,
}

impl From<SignalName> for SignalKind {
    fn from(s: SignalName) -> Self {
        match s {
            SignalName::ObjectSize => SignalKind::ObjectSize,
            SignalName::OpticalFlow => SignalKind::OpticalFlow,
            SignalName::MedianDistance => SignalKind::MedianDistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpdSection {
    /// Breakpoint count; ignored when `penalty` is set.
    pub k: usize,
    /// `"auto"` or a number; switches to penalized search.
    pub penalty: Option<serde_json::Value>,
    pub min_segment_size: usize,
    /// RBF gamma; median heuristic when absent.
    pub gamma: Option<f64>,
}

impl Default for CpdSection {
    fn default() -> Self {
        Self {
            k: hazardscope::changepoint::DEFAULT_K,
            penalty: None,
            min_segment_size: hazardscope::changepoint::DEFAULT_MIN_SEGMENT_SIZE,
            gamma: None,
        }
    }
}

impl CpdSection {
    pub fn to_config(&self) -> Result<CpdConfig<f64>, PipelineError> {
        let mode = match &self.penalty {
            None => CpdMode::FixedK(self.k),
            Some(serde_json::Value::String(s)) if s == "auto" => CpdMode::Penalized(Penalty::Auto),
            Some(serde_json::Value::Number(n)) => CpdMode::Penalized(Penalty::Fixed(
                n.as_f64()
                    .ok_or_else(|| PipelineError::Config("cpd.penalty is not a number".into()))?,
            )),
            Some(other) => {
                return Err(PipelineError::Config(format!(
                    "cpd.penalty must be \"auto\" or a number, got {other}"
                )))
            }
        };
        Ok(CpdConfig {
            mode,
            min_segment_size: self.min_segment_size,
            kernel: KernelSpec {
                gamma: self.gamma.map_or(Gamma::Auto, Gamma::Fixed),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionSection {
    pub strategy: String,
    /// Series combined by the ensemble strategies.
    pub ensemble_members: Vec<String>,
    pub cpd: CpdSection,
    pub min_window: usize,
    pub slope_threshold: f64,
}

impl Default for ReactionSection {
    fn default() -> Self {
        Self {
            strategy: "ensemble(mean)".into(),
            ensemble_members: vec!["object_size".into(), "optical_flow".into()],
            cpd: CpdSection::default(),
            min_window: DEFAULT_MIN_WINDOW,
            slope_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub pyramid_scale: f64,
    pub levels: usize,
    pub window_size: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
    pub prescale: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let p = FlowParams::<f64>::default();
        Self {
            pyramid_scale: p.pyramid_scale,
            levels: p.levels,
            window_size: p.window_size,
            iterations: p.iterations,
            poly_n: p.poly_n,
            poly_sigma: p.poly_sigma,
            prescale: p.prescale,
        }
    }
}

impl FlowSection {
    pub fn params(&self) -> Result<FlowParams<f64>, PipelineError> {
        let p = FlowParams {
            pyramid_scale: self.pyramid_scale,
            levels: self.levels,
            window_size: self.window_size,
            iterations: self.iterations,
            poly_n: self.poly_n,
            poly_sigma: self.poly_sigma,
            prescale: self.prescale,
        };
        p.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    Whitelist,
    TrajectorySize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementName {
    Net,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtentName {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HazardSection {
    /// `all` or `nearest_k(K)`.
    pub base: String,
    pub filters: Vec<FilterName>,
    pub whitelist: Vec<String>,
    pub displacement: DisplacementName,
    pub extent: ExtentName,
}

impl Default for HazardSection {
    fn default() -> Self {
        Self {
            base: "all".into(),
            filters: vec![FilterName::Whitelist, FilterName::TrajectorySize],
            whitelist: DEFAULT_WHITELIST.iter().map(|s| s.to_string()).collect(),
            displacement: DisplacementName::Net,
            extent: ExtentName::Max,
        }
    }
}

impl HazardSection {
    pub fn to_config(&self) -> Result<HazardConfig, PipelineError> {
        Ok(HazardConfig {
            base: parse_base_strategy(&self.base)?,
            filters: self
                .filters
                .iter()
                .map(|f| match f {
                    FilterName::Whitelist => HazardFilter::Whitelist,
                    FilterName::TrajectorySize => HazardFilter::TrajectorySize,
                })
                .collect(),
            whitelist: Whitelist::new(&self.whitelist),
            trajectory: TrajectoryRule {
                displacement: match self.displacement {
                    DisplacementName::Net => DisplacementMeasure::Net,
                    DisplacementName::Path => DisplacementMeasure::Path,
                },
                extent: match self.extent {
                    ExtentName::Max => ExtentMeasure::Max,
                    ExtentName::Min => ExtentMeasure::Min,
                },
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    /// No captions; hazard names fall back to class labels.
    None,
    /// Answers come from `caption_cache` only.
    Replay,
    /// Live service at the captioner URL.
    Live,
    /// Live service, with answers appended to `caption_cache`.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptionSection {
    pub mode: CaptionMode,
    pub crops: usize,
    pub words: usize,
    pub retry_attempts: usize,
    pub retry_delay_ms: u64,
    /// Concurrent backend requests across all workers.
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for CaptionSection {
    fn default() -> Self {
        Self {
            mode: CaptionMode::None,
            crops: hazardscope::captions::DEFAULT_CROP_COUNT,
            words: hazardscope::captions::DEFAULT_TAKE,
            retry_attempts: 3,
            retry_delay_ms: 1000,
            max_in_flight: 4,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub annotations: Option<PathBuf>,
    pub frames_root: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub caption_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: PathSection,
    /// Signals written by the `signals` subcommand; defaults to those the
    /// reaction strategy needs.
    pub signals: Option<Vec<SignalName>>,
    pub reaction: ReactionSection,
    pub flow: FlowSection,
    pub hazards: HazardSection,
    pub captions: CaptionSection,
    pub captioner_url: Option<String>,
    pub classifier_url: Option<String>,
    pub slots: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathSection::default(),
            signals: None,
            reaction: ReactionSection::default(),
            flow: FlowSection::default(),
            hazards: HazardSection::default(),
            captions: CaptionSection::default(),
            captioner_url: None,
            classifier_url: None,
            slots: DEFAULT_SLOTS,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.annotations,
            &mut p.frames_root,
            &mut p.ground_truth,
            &mut p.predictions,
            &mut p.caption_cache,
        ] {
            if let Some(rel) = slot.as_ref().filter(|r| r.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
    }

    /// Fills service URLs from the environment when the file leaves them out.
    pub fn apply_env(&mut self) {
        if self.captioner_url.is_none() {
            self.captioner_url = std::env::var(CAPTIONER_URL_ENV).ok().filter(|s| !s.is_empty());
        }
        if self.classifier_url.is_none() {
            self.classifier_url = std::env::var(CLASSIFIER_URL_ENV).ok().filter(|s| !s.is_empty());
        }
    }

    pub fn reaction_strategy(&self) -> Result<ReactionStrategy, PipelineError> {
        ReactionStrategy::parse(&self.reaction.strategy)
    }

    /// Members of an ensemble, each a single-signal strategy.
    pub fn ensemble_members(&self) -> Result<Vec<ReactionStrategy>, PipelineError> {
        if self.reaction.ensemble_members.is_empty() {
            return Err(PipelineError::Config("reaction.ensemble_members is empty".into()));
        }
        self.reaction
            .ensemble_members
            .iter()
            .map(|m| match ReactionStrategy::parse(m)? {
                ReactionStrategy::Ensemble(_) => Err(PipelineError::Config(format!(
                    "ensemble member {m:?} cannot itself be an ensemble"
                ))),
                s => Ok(s),
            })
            .collect()
    }

    /// Signals needed to compute the configured reaction strategy.
    pub fn required_signals(&self) -> Result<Vec<SignalName>, PipelineError> {
        let strategies = match self.reaction_strategy()? {
            ReactionStrategy::Ensemble(_) => self.ensemble_members()?,
            s => vec![s],
        };
        let mut out = Vec::new();
        for s in strategies {
            let sig = match s {
                ReactionStrategy::ObjectSize => SignalName::ObjectSize,
                ReactionStrategy::OpticalFlow => SignalName::OpticalFlow,
                ReactionStrategy::Baseline => SignalName::MedianDistance,
                ReactionStrategy::Ensemble(_) => unreachable!("members are single-signal"),
            };
            if !out.contains(&sig) {
                out.push(sig);
            }
        }
        Ok(out)
    }

    /// Checks everything that can be checked before touching inputs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.required_signals()?;
        self.reaction.cpd.to_config()?;
        self.flow.params()?;
        self.hazards.to_config()?;
        if self.slots == 0 {
            return Err(PipelineError::Config("slots must be at least 1".into()));
        }
        if self.captions.crops == 0 || self.captions.words == 0 {
            return Err(PipelineError::Config(
                "captions.crops and captions.words must be at least 1".into(),
            ));
        }
        if self.captions.max_in_flight == 0 {
            return Err(PipelineError::Config(
                "captions.max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn set_reaction_strategy(&mut self, name: &str) -> Result<(), PipelineError> {
        let s = ReactionStrategy::parse(name)?;
        self.reaction.strategy = s.name().into();
        Ok(())
    }

    pub fn set_hazard_base(&mut self, name: &str) -> Result<(), PipelineError> {
        self.hazards.base = base_strategy_name(parse_base_strategy(name)?);
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, PipelineError> {
        path.as_deref()
            .ok_or_else(|| PipelineError::Config(format!("paths.{what} is required for this command")))
    }
}
