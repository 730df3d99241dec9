//! Two-stage classification (real → synthetic → laundered), batch
//! evaluation reports, and calibration of both stages from a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degradations::{apply_postproc, PostProcOp};
use crate::error::{Error, Result};
use crate::imaging::{load_image, ClassLabel, ImageBuffer};
use crate::manifest::DatasetManifest;
use crate::metrics::{histogram, metric_row, Histogram, MetricRow, ScoredItem};
use crate::patch::{aggregate_top_fraction, derive_seed, sample_patches, AggregationConfig, Patch, SamplerConfig};
use crate::scorers::{calibrate, ExternalScorer, ExternalScorerConfig, PatchScorer, ScorerModel, DEFAULT_TIMEOUT_MS};
use crate::spectral::{
    detect_peaks, extract_residual, render_spectrum, spectral_features, Denoiser, FeatureConfig, SpectralFeatures,
    Spectrum, SpectrumAccumulator, SpectrumSidecar,
};

pub const PIPELINE_FILE: &str = "pipeline.json";
pub const STAGE1_FILE: &str = "stage1.json";
pub const STAGE2_FILE: &str = "stage2.json";
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;
/// Seed offset separating the optional second patch draw from the first.
const STAGE2_RESAMPLE_STREAM: u64 = 0x5354_4147_4532;

/// Where a stage's scores come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    /// Model JSON, relative paths resolved against the model directory.
    Builtin { model: PathBuf },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sampler: SamplerConfig,
    pub aggregation: AggregationConfig,
    pub stage1: ScorerSpec,
    pub stage2: ScorerSpec,
    #[serde(default)]
    pub stage1_threshold: f64,
    #[serde(default)]
    pub stage2_threshold: f64,
    /// Draw a fresh patch set for stage 2 instead of reusing stage 1's.
    #[serde(default)]
    pub resample_stage2: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.aggregation.validate()?;
        if !self.stage1_threshold.is_finite() || !self.stage2_threshold.is_finite() {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        for spec in [&self.stage1, &self.stage2] {
            if let ScorerSpec::External { command, .. } = spec {
                if command.is_empty() {
                    return Err(Error::InvalidConfig("external scorer command is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// A resolved stage scorer.
#[derive(Clone, Debug, PartialEq)]
pub enum StageScorer {
    Builtin(ScorerModel),
    External(ExternalScorerConfig),
}

impl StageScorer {
    fn resolve(spec: &ScorerSpec, dir: &Path) -> Result<Self> {
        match spec {
            ScorerSpec::Builtin { model } => Ok(StageScorer::Builtin(ScorerModel::load(dir.join(model))?)),
            ScorerSpec::External { command, timeout_ms } => Ok(StageScorer::External(ExternalScorerConfig {
                command: command.clone(),
                timeout_ms: *timeout_ms,
            })),
        }
    }
}

/// Configuration plus both resolved scorers.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub stage1: StageScorer,
    pub stage2: StageScorer,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, stage1: StageScorer, stage2: StageScorer) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, stage1, stage2 })
    }

    /// Two built-in models with the default file layout.
    pub fn from_models(
        sampler: SamplerConfig,
        aggregation: AggregationConfig,
        stage1: ScorerModel,
        stage2: ScorerModel,
    ) -> Result<Self> {
        let config = PipelineConfig {
            sampler,
            aggregation,
            stage1: ScorerSpec::Builtin { model: STAGE1_FILE.into() },
            stage2: ScorerSpec::Builtin { model: STAGE2_FILE.into() },
            stage1_threshold: 0.0,
            stage2_threshold: 0.0,
            resample_stage2: false,
        };
        Self::new(config, StageScorer::Builtin(stage1), StageScorer::Builtin(stage2))
    }

    /// Reads `pipeline.json` and the model files it names.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(PIPELINE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let stage1 = StageScorer::resolve(&config.stage1, dir)?;
        let stage2 = StageScorer::resolve(&config.stage2, dir)?;
        Ok(Self { config, stage1, stage2 })
    }

    /// Writes `pipeline.json` and every built-in model into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (spec, scorer) in [(&self.config.stage1, &self.stage1), (&self.config.stage2, &self.stage2)] {
            if let (ScorerSpec::Builtin { model: file }, StageScorer::Builtin(model)) = (spec, scorer) {
                model.save(dir.join(file))?;
            }
        }
        let path = dir.join(PIPELINE_FILE);
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Opens a scoring session; external scorers are started lazily.
    pub fn session(&self) -> Session<'_> {
        Session {
            pipeline: self,
            stage1: None,
            stage2: None,
            counters: StageCounters::default(),
        }
    }

    pub fn classify_image(&self, img: &ImageBuffer, index: u64) -> Result<ClassificationResult> {
        self.session().classify(img, index)
    }
}

/// Pipeline verdict for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub label: ClassLabel,
    pub s1: f64,
    /// Absent exactly when `label` is `Real`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s2: Option<f64>,
}

/// Patches scored per stage over a session's lifetime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageCounters {
    pub stage1_patches: u64,
    pub stage2_patches: u64,
    pub stage2_images: u64,
}

enum Active<'a> {
    Builtin(&'a ScorerModel),
    External(ExternalScorer),
}

impl Active<'_> {
    fn start(scorer: &StageScorer) -> Result<Active<'_>> {
        Ok(match scorer {
            StageScorer::Builtin(m) => Active::Builtin(m),
            StageScorer::External(cfg) => Active::External(ExternalScorer::spawn(cfg)?),
        })
    }
}

/// Features of one patch set, computed once and shared by built-in stages
/// that use the same feature settings.
struct FeatureCache {
    cfg: Option<FeatureConfig>,
    features: Vec<SpectralFeatures>,
}

impl FeatureCache {
    fn new() -> Self {
        Self {
            cfg: None,
            features: Vec::new(),
        }
    }

    fn get(&mut self, patches: &[Patch], cfg: &FeatureConfig) -> Result<&[SpectralFeatures]> {
        if self.cfg.as_ref() != Some(cfg) {
            self.features = patches
                .iter()
                .map(|p| spectral_features(p, cfg))
                .collect::<Result<_>>()?;
            self.cfg = Some(*cfg);
        }
        Ok(&self.features)
    }
}

/// Per-worker scoring state; owns any external scorer processes.
pub struct Session<'a> {
    pipeline: &'a Pipeline,
    stage1: Option<Active<'a>>,
    stage2: Option<Active<'a>>,
    counters: StageCounters,
}

#[derive(Clone, Copy)]
enum Stage {
    One,
    Two,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::One => "stage 1",
            Stage::Two => "stage 2",
        }
    }
}

impl<'a> Session<'a> {
    pub fn counters(&self) -> StageCounters {
        self.counters
    }

    fn score(&mut self, stage: Stage, patches: &[Patch], cache: &mut FeatureCache) -> Result<f64> {
        let pipeline = self.pipeline;
        let (slot, scorer) = match stage {
            Stage::One => (&mut self.stage1, &pipeline.stage1),
            Stage::Two => (&mut self.stage2, &pipeline.stage2),
        };
        if slot.is_none() {
            *slot = Some(Active::start(scorer)?);
        }
        let scores = match slot.as_mut().expect("scorer started") {
            Active::Builtin(model) => cache
                .get(patches, &model.feature_cfg)?
                .iter()
                .map(|f| model.score_features(f))
                .collect(),
            Active::External(ext) => ext.score_patches(patches)?,
        };
        match stage {
            Stage::One => self.counters.stage1_patches += patches.len() as u64,
            Stage::Two => {
                self.counters.stage2_patches += patches.len() as u64;
                self.counters.stage2_images += 1;
            }
        }
        aggregate_top_fraction(&scores, &pipeline.config.aggregation)
    }

    fn sample(&self, img: &ImageBuffer, seed: u64) -> Result<Vec<Patch>> {
        sample_patches(img, &self.pipeline.config.sampler.with_seed(seed))
    }

    /// Cascade for one image. With `force_stage2`, stage 2 also runs on
    /// images that stage 1 calls real; its score is then returned
    /// separately and the verdict is unchanged.
    fn run(&mut self, img: &ImageBuffer, index: u64, force_stage2: bool) -> Result<(ClassificationResult, Option<f64>)> {
        let cfg = &self.pipeline.config;
        let seed = derive_seed(cfg.sampler.seed, index);
        let patches = self.sample(img, seed).map_err(|e| e.in_stage("sampling"))?;
        let mut cache = FeatureCache::new();
        let s1 = self
            .score(Stage::One, &patches, &mut cache)
            .map_err(|e| e.in_stage(Stage::One.name()))?;
        let passes = s1 >= cfg.stage1_threshold;
        if !passes && !force_stage2 {
            let res = ClassificationResult {
                label: ClassLabel::Real,
                s1,
                s2: None,
            };
            return Ok((res, None));
        }
        let s2 = if cfg.resample_stage2 {
            let second = self
                .sample(img, derive_seed(seed, STAGE2_RESAMPLE_STREAM))
                .map_err(|e| e.in_stage("sampling"))?;
            self.score(Stage::Two, &second, &mut FeatureCache::new())
        } else {
            self.score(Stage::Two, &patches, &mut cache)
        }
        .map_err(|e| e.in_stage(Stage::Two.name()))?;
        let res = if passes {
            let label = if s2 >= cfg.stage2_threshold {
                ClassLabel::Laundered
            } else {
                ClassLabel::FullySynthetic
            };
            ClassificationResult { label, s1, s2: Some(s2) }
        } else {
            ClassificationResult {
                label: ClassLabel::Real,
                s1,
                s2: None,
            }
        };
        Ok((res, Some(s2)))
    }

    /// Classifies `img`; `index` selects its patch stream.
    pub fn classify(&mut self, img: &ImageBuffer, index: u64) -> Result<ClassificationResult> {
        self.run(img, index, false).map(|r| r.0)
    }
}

fn in_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub postproc: Vec<PostProcOp>,
    pub skip_errors: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub histogram_bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            postproc: Vec::new(),
            skip_errors: false,
            workers: None,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub sampler: SamplerConfig,
    pub aggregation: AggregationConfig,
    pub stage1: ScorerSpec,
    pub stage2: ScorerSpec,
    pub stage1_threshold: f64,
    pub stage2_threshold: f64,
    pub resample_stage2: bool,
    pub postproc: Vec<PostProcOp>,
    pub skip_errors: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub path: String,
    pub label: ClassLabel,
    pub group: String,
    pub predicted: ClassLabel,
    pub s1: f64,
    /// Stage-2 score; computed for every ground-truth synthetic item and
    /// every item stage 1 passes on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row and column order; rows are ground truth, columns predictions.
    pub labels: [ClassLabel; 3],
    pub counts: [[usize; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub n_images: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage1: Option<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage2: Option<MetricRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageHistograms {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage1: Option<Histogram>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage2: Option<Histogram>,
}

/// Results for one post-processing condition (`"none"` for clean input).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub postproc: String,
    pub n_images: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage1: Option<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage2: Option<MetricRow>,
    pub confusion: ConfusionMatrix,
    /// Mean per-class recall of the cascade at the configured thresholds,
    /// over classes present.
    pub three_class_b_acc: f64,
    pub groups: BTreeMap<String, GroupReport>,
    pub histograms: StageHistograms,
    pub items: Vec<ItemRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub n_manifest: usize,
    pub clean: ConditionReport,
    pub postproc: Vec<ConditionReport>,
    pub warnings: Vec<String>,
    pub skipped: Vec<SkippedImage>,
}

impl EvalReport {
    /// Pretty JSON with a trailing newline; identical inputs give identical
    /// bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        std::iter::once(&self.clean)
            .chain(&self.postproc)
            .find(|c| c.postproc == name)
    }
}

struct Outcome {
    result: ClassificationResult,
    s2: Option<f64>,
}

enum ImageOutcome {
    Done(Vec<Outcome>),
    Failed(Error),
}

fn eval_one(session: &mut Session<'_>, img: &ImageBuffer, index: u64, synthetic: bool, ops: &[Option<PostProcOp>]) -> Result<Vec<Outcome>> {
    ops.iter()
        .map(|op| {
            let processed;
            let view = match op {
                None => img,
                Some(op) => {
                    processed = apply_postproc(img, op)?;
                    &processed
                }
            };
            let (result, s2) = session.run(view, index, synthetic)?;
            Ok(Outcome { result, s2 })
        })
        .collect()
}

fn stage_row(items: &[ItemRecord], stage: Stage, threshold: f64) -> Result<MetricRow> {
    let scored: Vec<ScoredItem> = match stage {
        Stage::One => items
            .iter()
            .map(|i| ScoredItem::new(i.s1, i.label.is_synthetic(), i.path.clone()))
            .collect(),
        Stage::Two => items
            .iter()
            .filter(|i| i.label.is_synthetic())
            .filter_map(|i| i.s2.map(|s| ScoredItem::new(s, i.label == ClassLabel::Laundered, i.path.clone())))
            .collect(),
    };
    metric_row(&scored, threshold)
}

/// Group rows compare a group's images against the shared reference set:
/// stage 1 against all real images, stage 2 against the other synthetic
/// class whenever the group lacks it.
fn group_reports(items: &[ItemRecord], thr: (f64, f64)) -> BTreeMap<String, GroupReport> {
    let groups: BTreeSet<&str> = items.iter().map(|i| i.group.as_str()).collect();
    groups
        .into_iter()
        .map(|g| {
            let members: Vec<&ItemRecord> = items.iter().filter(|i| i.group == g).collect();
            let has = |l: ClassLabel| members.iter().any(|i| i.label == l);
            let s1_set: Vec<ItemRecord> = items
                .iter()
                .filter(|i| (i.group == g && i.label.is_synthetic()) || i.label == ClassLabel::Real)
                .cloned()
                .collect();
            let s2_set: Vec<ItemRecord> = items
                .iter()
                .filter(|i| i.label.is_synthetic() && (i.group == g || !has(i.label)))
                .cloned()
                .collect();
            let any_synth = members.iter().any(|i| i.label.is_synthetic());
            let report = GroupReport {
                n_images: members.len(),
                stage1: any_synth.then(|| stage_row(&s1_set, Stage::One, thr.0).ok()).flatten(),
                stage2: any_synth.then(|| stage_row(&s2_set, Stage::Two, thr.1).ok()).flatten(),
            };
            (g.to_string(), report)
        })
        .collect()
}

fn condition_report(name: String, items: Vec<ItemRecord>, cfg: &PipelineConfig, bins: usize, warnings: &mut Vec<String>) -> ConditionReport {
    let mut row = |stage: Stage, threshold: f64| match stage_row(&items, stage, threshold) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("postproc {name}: {} metrics unavailable: {e}", stage.name()));
            None
        }
    };
    let stage1 = row(Stage::One, cfg.stage1_threshold);
    let stage2 = row(Stage::Two, cfg.stage2_threshold);
    let mut counts = [[0usize; 3]; 3];
    for i in &items {
        counts[i.label.index()][i.predicted.index()] += 1;
    }
    let recalls: Vec<f64> = counts
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().sum::<usize>() > 0)
        .map(|(k, row)| row[k] as f64 / row.iter().sum::<usize>() as f64)
        .collect();
    let three_class_b_acc = if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    };
    let h1: Vec<(f64, ClassLabel)> = items.iter().map(|i| (i.s1, i.label)).collect();
    let h2: Vec<(f64, ClassLabel)> = items
        .iter()
        .filter(|i| i.label.is_synthetic())
        .filter_map(|i| i.s2.map(|s| (s, i.label)))
        .collect();
    let histograms = StageHistograms {
        stage1: histogram(&h1, bins).ok(),
        stage2: histogram(&h2, bins).ok(),
    };
    ConditionReport {
        postproc: name,
        n_images: items.len(),
        stage1,
        stage2,
        confusion: ConfusionMatrix {
            labels: ClassLabel::ALL,
            counts,
        },
        three_class_b_acc,
        groups: group_reports(&items, (cfg.stage1_threshold, cfg.stage2_threshold)),
        histograms,
        items,
    }
}

/// Evaluates every manifest image, clean and under each post-processing
/// op. Results depend only on the manifest, the pipeline and `opts`
/// (never on worker count or scheduling).
pub fn run_eval(manifest: &DatasetManifest, pipeline: &Pipeline, opts: &EvalOptions) -> Result<EvalReport> {
    for op in &opts.postproc {
        op.validate()?;
    }
    if opts.histogram_bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let ops: Vec<Option<PostProcOp>> = std::iter::once(None)
        .chain(opts.postproc.iter().copied().map(Some))
        .collect();
    let entries = manifest.entries();
    let outcomes: Vec<ImageOutcome> = in_pool(opts.workers, || {
        entries
            .par_iter()
            .enumerate()
            .map_init(
                || pipeline.session(),
                |session, (index, entry)| {
                    let path = manifest.resolve(entry);
                    let res = load_image(&path)
                        .and_then(|img| eval_one(session, &img, index as u64, entry.label.is_synthetic(), &ops));
                    match res {
                        Ok(v) => ImageOutcome::Done(v),
                        Err(e) => ImageOutcome::Failed(e),
                    }
                },
            )
            .collect()
    })?;

    let mut warnings = Vec::new();
    let mut skipped = Vec::new();
    let mut per_condition: Vec<Vec<ItemRecord>> = vec![Vec::new(); ops.len()];
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            ImageOutcome::Done(results) => {
                for (slot, o) in per_condition.iter_mut().zip(results) {
                    slot.push(ItemRecord {
                        path: entry.path.clone(),
                        label: entry.label,
                        group: entry.group.clone(),
                        predicted: o.result.label,
                        s1: o.result.s1,
                        s2: o.s2,
                    });
                }
            }
            ImageOutcome::Failed(e) => {
                // scorer failures are never downgraded
                if !opts.skip_errors || e.kind() == crate::error::ErrorKind::Scorer {
                    return Err(e);
                }
                warnings.push(format!("skipped {}: {e}", entry.path));
                skipped.push(SkippedImage {
                    path: entry.path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if per_condition[0].is_empty() {
        return Err(Error::EmptyInput);
    }
    let cfg = &pipeline.config;
    let mut reports: Vec<ConditionReport> = ops
        .iter()
        .zip(per_condition)
        .map(|(op, items)| {
            let name = op.map_or_else(|| "none".to_string(), |o| o.to_string());
            condition_report(name, items, cfg, opts.histogram_bins, &mut warnings)
        })
        .collect();
    let clean = reports.remove(0);
    Ok(EvalReport {
        config: ConfigEcho {
            sampler: cfg.sampler,
            aggregation: cfg.aggregation,
            stage1: cfg.stage1.clone(),
            stage2: cfg.stage2.clone(),
            stage1_threshold: cfg.stage1_threshold,
            stage2_threshold: cfg.stage2_threshold,
            resample_stage2: cfg.resample_stage2,
            postproc: opts.postproc.clone(),
            skip_errors: opts.skip_errors,
        },
        n_manifest: entries.len(),
        clean,
        postproc: reports,
        warnings,
        skipped,
    })
}

// ---------------------------------------------------------- calibration

/// Which images count as positives when fitting stage 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Positives {
    /// Fully synthetic and laundered images.
    #[default]
    AllSynthetic,
    /// Fully synthetic only: stage 1 never sees a laundered image.
    FullySyntheticOnly,
}

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct CalibrationOptions {
    pub sampler: SamplerConfig,
    pub aggregation: AggregationConfig,
    pub feature_cfg: FeatureConfig,
    pub stage1_positives: Stage1Positives,
    pub workers: Option<usize>,
}


#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub pipeline: Pipeline,
    pub warnings: Vec<String>,
}

/// Paths present in both manifests, after resolution.
pub fn shared_paths(a: &DatasetManifest, b: &DatasetManifest) -> Vec<PathBuf> {
    let norm = |p: PathBuf| std::fs::canonicalize(&p).unwrap_or(p);
    let left: BTreeSet<PathBuf> = a.resolved_paths().into_iter().map(norm).collect();
    let mut shared: Vec<PathBuf> = b
        .resolved_paths()
        .into_iter()
        .map(norm)
        .filter(|p| left.contains(p))
        .collect();
    shared.sort();
    shared.dedup();
    shared
}

/// Fits both stages on patch features of the training manifest.
///
/// Stage 1 separates real from synthetic images (see
/// [`Stage1Positives`]); stage 2 separates laundered (positive) from fully
/// synthetic. Both models keep the default threshold of 0.
pub fn calibrate_pipeline(train: &DatasetManifest, opts: &CalibrationOptions, test: Option<&DatasetManifest>) -> Result<Calibration> {
    opts.sampler.validate()?;
    opts.aggregation.validate()?;
    for label in ClassLabel::ALL {
        if train.count(label) == 0 {
            return Err(Error::Manifest(format!("training manifest has no {label} images")));
        }
    }
    let mut warnings = Vec::new();
    if let Some(test) = test {
        let shared = shared_paths(train, test);
        if !shared.is_empty() {
            warnings.push(format!(
                "{} image(s) appear in both the training and the test manifest (first: {})",
                shared.len(),
                shared[0].display()
            ));
        }
    }
    let entries = train.entries();
    let features: Vec<Vec<SpectralFeatures>> = in_pool(opts.workers, || {
        entries
            .par_iter()
            .enumerate()
            .map(|(index, entry)| {
                let img = load_image(train.resolve(entry))?;
                let seed = derive_seed(opts.sampler.seed, index as u64);
                sample_patches(&img, &opts.sampler.with_seed(seed))?
                    .iter()
                    .map(|p| spectral_features(p, &opts.feature_cfg))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut by_class: [Vec<SpectralFeatures>; 3] = Default::default();
    for (entry, f) in entries.iter().zip(features) {
        by_class[entry.label.index()].extend(f);
    }
    let [real, fully, laundered] = &by_class;
    let stage1_pos: Vec<SpectralFeatures> = match opts.stage1_positives {
        Stage1Positives::AllSynthetic => fully.iter().chain(laundered).copied().collect(),
        Stage1Positives::FullySyntheticOnly => fully.clone(),
    };
    let stage1 = calibrate(&stage1_pos, real, ClassLabel::FullySynthetic, opts.feature_cfg)
        .map_err(|e| e.in_stage(Stage::One.name()))?;
    let stage2 = calibrate(laundered, fully, ClassLabel::Laundered, opts.feature_cfg)
        .map_err(|e| e.in_stage(Stage::Two.name()))?;
    let pipeline = Pipeline::from_models(opts.sampler, opts.aggregation, stage1, stage2)?;
    Ok(Calibration { pipeline, warnings })
}

// ------------------------------------------------------------- spectra

/// Average residual magnitude spectrum over every manifest image of
/// `label`, with its peak summary. All such images must share one size.
pub fn class_spectrum(
    manifest: &DatasetManifest,
    label: ClassLabel,
    factor: usize,
    denoiser: &Denoiser,
) -> Result<(Spectrum, SpectrumSidecar)> {
    let mut acc: Option<SpectrumAccumulator> = None;
    for entry in manifest.entries().iter().filter(|e| e.label == label) {
        let path = manifest.resolve(entry);
        let img = load_image(&path)?;
        let res = extract_residual(&img, denoiser)?;
        acc.get_or_insert_with(|| SpectrumAccumulator::new(res.width, res.height))
            .add_residual(&res)
            .map_err(|e| match e {
                Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("{}: {m}", path.display())),
                e => e,
            })?;
    }
    let spec = acc
        .ok_or_else(|| Error::Manifest(format!("manifest has no {label} images")))?
        .finish()?;
    let peaks = detect_peaks(&spec, factor)?;
    let sidecar = SpectrumSidecar {
        width: spec.width,
        height: spec.height,
        count: spec.count,
        factor,
        peak_strength: peaks.peak_strength,
    };
    Ok((spec, sidecar))
}

/// Writes `<prefix>.png` (log-magnitude rendering) and `<prefix>.json`.
pub fn write_spectrum(spec: &Spectrum, sidecar: &SpectrumSidecar, prefix: &str) -> Result<(PathBuf, PathBuf)> {
    let png = PathBuf::from(format!("{prefix}.png"));
    let json = PathBuf::from(format!("{prefix}.json"));
    crate::imaging::save_image(&render_spectrum(spec), &png)?;
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes") + "\n";
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok((png, json))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Denoiser;

    fn constant_model(bias: f64, positive_class: ClassLabel) -> ScorerModel {
        ScorerModel {
            weights: [0.0; 3],
            bias,
            positive_class,
            feature_cfg: FeatureConfig::default(),
        }
    }

    fn pipeline(b1: f64, b2: f64) -> Pipeline {
        let sampler = SamplerConfig {
            n_patches: 4,
            patch_size: 16,
            seed: 1,
        };
        Pipeline::from_models(
            sampler,
            AggregationConfig::default(),
            constant_model(b1, ClassLabel::FullySynthetic),
            constant_model(b2, ClassLabel::Laundered),
        )
        .unwrap()
    }

    fn image() -> ImageBuffer {
        let v: Vec<u8> = (0..32 * 32 * 3).map(|i| ((i * 7) % 256) as u8).collect();
        ImageBuffer::from_bytes(32, 32, 3, v).unwrap()
    }

    #[test]
    fn early_exit_skips_stage2() {
        let p = pipeline(-1.0, 1.0);
        let mut s = p.session();
        let r = s.classify(&image(), 0).unwrap();
        assert_eq!(r.label, ClassLabel::Real);
        assert_eq!(r.s1, -1.0);
        assert_eq!(r.s2, None);
        assert_eq!(s.counters().stage2_patches, 0);
        assert_eq!(s.counters().stage1_patches, 4);
    }

    #[test]
    fn cascade_labels() {
        let r = pipeline(1.0, 1.0).classify_image(&image(), 0).unwrap();
        assert_eq!((r.label, r.s2), (ClassLabel::Laundered, Some(1.0)));
        let r = pipeline(1.0, -1.0).classify_image(&image(), 0).unwrap();
        assert_eq!((r.label, r.s2), (ClassLabel::FullySynthetic, Some(-1.0)));
        // threshold boundary: s1 == 0 passes to stage 2
        let r = pipeline(0.0, 0.0).classify_image(&image(), 0).unwrap();
        assert_eq!(r.label, ClassLabel::Laundered);
    }

    #[test]
    fn sampling_errors_are_annotated() {
        let tiny = ImageBuffer::from_bytes(8, 8, 3, vec![0; 192]).unwrap();
        let e = pipeline(1.0, 1.0).classify_image(&tiny, 0).unwrap_err();
        assert!(matches!(e.root(), Error::ImageTooSmall { .. }));
        assert!(e.to_string().starts_with("sampling:"), "{e}");
    }

    #[test]
    fn both_stages_see_the_same_patches() {
        // identical weights ⇒ identical scores only if the patch sets match
        let m = ScorerModel {
            weights: [0.5, 3.0, -2.0],
            bias: 10.0,
            positive_class: ClassLabel::Laundered,
            feature_cfg: FeatureConfig::default(),
        };
        let mut p = pipeline(0.0, 0.0);
        p.config.sampler = SamplerConfig {
            n_patches: 8,
            patch_size: 16,
            seed: 3,
        };
        p.stage1 = StageScorer::Builtin(m.clone());
        p.stage2 = StageScorer::Builtin(m.clone());
        let r = p.classify_image(&image(), 5).unwrap();
        assert_eq!(Some(r.s1), r.s2);
        p.config.resample_stage2 = true;
        let mut other = m;
        other.feature_cfg.denoiser = Denoiser::Gaussian { sigma: 1.0 };
        p.stage2 = StageScorer::Builtin(other);
        let r2 = p.classify_image(&image(), 5).unwrap();
        assert_eq!(r2.s1, r.s1);
        assert!(r2.s2.is_some());
    }

    #[test]
    fn config_rejects_bad_thresholds() {
        let mut p = pipeline(0.0, 0.0);
        p.config.stage1_threshold = f64::NAN;
        assert!(p.config.validate().is_err());
    }

    #[test]
    fn pipeline_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = pipeline(0.5, -0.5);
        p.save(dir.path()).unwrap();
        assert_eq!(Pipeline::load(dir.path()).unwrap(), p);
        assert!(matches!(Pipeline::load(dir.path().join("missing")), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn external_spec_parses_with_default_timeout() {
        let spec: ScorerSpec = serde_json::from_str(r#"{"kind":"external","command":["x","--y"]}"#).unwrap();
        assert_eq!(
            spec,
            ScorerSpec::External {
                command: vec!["x".into(), "--y".into()],
                timeout_ms: DEFAULT_TIMEOUT_MS
            }
        );
    }
}
