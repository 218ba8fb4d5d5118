//! End-to-end orchestration: captures to feature tables, ensemble training
//! and nested cross-validated evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::{Activity, ActivitySet};
use crate::capture::{assemble_conversations, parse_pcap, CaptureError, LocalEndpoint, SkipCounts};
use crate::ensemble::{build_ensemble, ensemble_score, Candidate, CvScore, EnsembleError, EnsembleModel, TransportProfile};
use crate::flowstats::{extract_features, FeatureSchema, FeatureTable, FeatureVector, FlowConfig, FlowError};
use crate::learners::{
    compute_metrics, cross_validate, stratified_folds_by_key, train, Confusion, CvReport, LearnError, Metrics,
    ModelSpec,
};
use crate::matrix::{FeatureMatrix, MatrixError};
use crate::selection::{
    select_attributes, shapley_rank, AttributionReport, Selection, SelectionError, ShapleyConfig, ShapleyMode,
    DEFAULT_SELECT_CAP, DEFAULT_SELECT_MASS,
};
use crate::sidechannel::{analyze_window, SideChannelConfig, WindowReport};
use crate::synthgen::{read_corpus_index, SynthError};
use crate::transforms::{AugmentConfig, Augmenter, TransformError};
use crate::windowing::{attach_labels, segment_windows, Origin, WindowError, DEFAULT_WINDOW_US};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {reason}")]
    Input { path: String, reason: String },
}

/// SplitMix64 step, used to derive independent child seeds.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub local: LocalEndpoint,
    pub window_us: u64,
    pub origin: Origin,
    pub flow: FlowConfig,
}

impl ExtractConfig {
    pub fn new(local: LocalEndpoint) -> Self {
        ExtractConfig {
            local,
            window_us: DEFAULT_WINDOW_US,
            origin: Origin::FirstPacket,
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub vectors: Vec<FeatureVector>,
    pub skipped: SkipCounts,
    pub partial_windows: usize,
}

/// Parses, windows, labels and featurizes one capture.
pub fn extract_capture(pcap: &[u8], labels: &str, cfg: &ExtractConfig) -> Result<Extracted, PipelineError> {
    let parsed = parse_pcap(pcap, &cfg.local)?;
    let conversations = assemble_conversations(parsed.records);
    let windows = segment_windows(&conversations, cfg.window_us, cfg.origin)?;
    let windows = attach_labels(windows, labels)?;
    let partial_windows = windows.iter().filter(|w| w.partial).count();
    let vectors = windows
        .iter()
        .map(|w| extract_features(w, &cfg.flow))
        .collect::<Result<_, _>>()?;
    Ok(Extracted {
        vectors,
        skipped: parsed.skipped,
        partial_windows,
    })
}

/// Side-channel reports for every window that carries TCP.
pub fn detect_capture(
    pcap: &[u8],
    local: &LocalEndpoint,
    window_us: u64,
    config: &SideChannelConfig,
) -> Result<Vec<WindowReport>, PipelineError> {
    let parsed = parse_pcap(pcap, local)?;
    let conversations = assemble_conversations(parsed.records);
    let windows = segment_windows(&conversations, window_us, Origin::FirstPacket)?;
    Ok(windows
        .iter()
        .filter(|w| w.has_tcp())
        .map(|w| analyze_window(w, config).expect("window has TCP"))
        .collect())
}

/// Feature rows with multi-hot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: Vec<ActivitySet>,
}

impl Dataset {
    pub fn from_vectors(vectors: &[FeatureVector], schema: &FeatureSchema) -> Result<Self, PipelineError> {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
        Ok(Dataset {
            features: FeatureMatrix::new(schema.names.clone(), &rows)?,
            labels: vectors.iter().map(|v| v.labels).collect(),
        })
    }

    pub fn from_table(table: &FeatureTable) -> Result<Self, PipelineError> {
        Ok(Dataset {
            features: FeatureMatrix::new(table.schema.names.clone(), &table.rows)?,
            labels: table.labels.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_labels(&self, class: Activity) -> Vec<bool> {
        self.labels.iter().map(|l| l.contains(class)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Features of every trace listed in a synthetic corpus directory.
pub fn load_corpus(dir: &Path, cfg: &ExtractConfig) -> Result<Dataset, PipelineError> {
    let index = read_corpus_index(dir)?;
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| PipelineError::Input {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    };
    let mut vectors = Vec::new();
    for entry in &index.entries {
        let pcap = read(&entry.pcap)?;
        let labels = String::from_utf8_lossy(&read(&entry.labels)?).into_owned();
        vectors.extend(extract_capture(&pcap, &labels, cfg)?.vectors);
    }
    Dataset::from_vectors(&vectors, &FeatureSchema::base())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub transport: TransportProfile,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Model whose Shapley values rank the attributes.
    pub ranker: ModelSpec,
    pub shapley: ShapleyConfig,
    /// Training rows attributed per class.
    pub shapley_targets: usize,
    pub select_mass: f64,
    pub select_cap: usize,
    pub roster: Vec<ModelSpec>,
    pub inner_folds: usize,
}

impl TrainConfig {
    pub fn new(transport: TransportProfile, seed: u64) -> Self {
        TrainConfig {
            transport,
            seed,
            augment: AugmentConfig {
                seed,
                ..AugmentConfig::default()
            },
            ranker: ModelSpec::random_forest(30, seed),
            shapley: ShapleyConfig {
                mode: ShapleyMode::MonteCarlo { samples_per_row: 8 },
                seed,
                ..ShapleyConfig::default()
            },
            shapley_targets: 100,
            select_mass: DEFAULT_SELECT_MASS,
            select_cap: DEFAULT_SELECT_CAP,
            roster: ModelSpec::default_roster(seed),
            inner_folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTraining {
    pub class: Activity,
    pub attribution: AttributionReport,
    pub selection: Selection,
    /// Attributes actually used; the full ranking prefix when the
    /// selection came back empty.
    pub attributes: Vec<String>,
    pub cv: Vec<CvReport>,
}

/// Everything needed to score new base feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub config: TrainConfig,
    pub augmenter: Augmenter,
    pub ensemble: EnsembleModel,
    pub classes: Vec<ClassTraining>,
}

impl TrainedPipeline {
    pub fn predict(&self, base: &FeatureMatrix) -> Result<Vec<ActivitySet>, PipelineError> {
        let augmented = self.augmenter.augment(base)?;
        Ok(self.ensemble.predict_matrix(&augmented)?)
    }
}

fn subsample(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits projections, selects attributes per class, cross-validates the
/// roster and keeps the three most precise models per class, each retrained
/// on all of `data`.
pub fn train_pipeline(data: &Dataset, cfg: &TrainConfig) -> Result<TrainedPipeline, PipelineError> {
    let augmenter = Augmenter::fit(&data.features, cfg.augment)?;
    let augmented = augmenter.augment(&data.features)?;
    let mut classes = Vec::with_capacity(Activity::ALL.len());
    let mut per_class = Vec::with_capacity(Activity::ALL.len());
    for class in Activity::ALL {
        let class_seed = derive_seed(cfg.seed, class.index() as u64 + 1);
        let labels = data.class_labels(class);

        let ranker = train(&cfg.ranker.with_seed(class_seed), &augmented, &labels)?;
        let targets = augmented.select_rows(&subsample(augmented.n_rows(), cfg.shapley_targets, class_seed));
        let shapley = ShapleyConfig {
            seed: class_seed,
            ..cfg.shapley
        };
        let attribution = shapley_rank(&ranker, class, &augmented, &targets, &shapley)?;
        let selection = select_attributes(&attribution, cfg.select_mass, cfg.select_cap);
        let attributes = if selection.attributes.is_empty() {
            attribution.ranking.iter().take(cfg.select_cap.max(1)).cloned().collect()
        } else {
            selection.attributes.clone()
        };
        let subset = augmented.select_columns(&attributes)?;

        let mut cv = Vec::with_capacity(cfg.roster.len());
        for spec in &cfg.roster {
            cv.push(cross_validate(spec, &subset, &labels, cfg.inner_folds, class_seed)?);
        }
        let scores: Vec<CvScore> = cv
            .iter()
            .map(|r| CvScore {
                precision: r.mean_precision,
                recall: r.mean_recall,
                f1: r.mean_f1,
            })
            .collect();
        let mut candidates = Vec::new();
        for &i in crate::ensemble::rank_candidates(&scores).iter().take(crate::ensemble::COMMITTEE_SIZE) {
            candidates.push(Candidate {
                spec: cfg.roster[i],
                cv: scores[i],
                model: train(&cfg.roster[i], &subset, &labels)?,
            });
        }
        per_class.push((class, candidates));
        classes.push(ClassTraining {
            class,
            attribution,
            selection,
            attributes,
            cv,
        });
    }
    let ensemble = build_ensemble(cfg.transport, per_class, vec![cfg.seed])?;
    Ok(TrainedPipeline {
        config: cfg.clone(),
        augmenter,
        ensemble,
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: Activity,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub score: f64,
    /// Committee member names per class.
    pub members: Vec<Vec<String>>,
    pub attributes: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub transport: TransportProfile,
    pub seed: u64,
    pub outer_folds: usize,
    /// Confusions pooled over all test folds.
    pub per_class: Vec<ClassResult>,
    pub folds: Vec<FoldResult>,
    pub mean_score: f64,
}

impl EvaluationReport {
    /// `class,tp,fp,tn,fn,accuracy,precision,recall,f1`, two decimals.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,tp,fp,tn,fn,accuracy,precision,recall,f1\n");
        for r in &self.per_class {
            let m = &r.metrics;
            let c = m.confusion;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.2},{:.2},{:.2},{:.2}",
                r.class, c.tp, c.fp, c.tn, c.fn_, m.accuracy, m.precision, m.recall, m.f1
            );
        }
        out
    }

    /// `fold,score` rows then the average.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("fold,score\n");
        for f in &self.folds {
            let _ = writeln!(out, "{},{:.2}", f.fold + 1, f.score);
        }
        let _ = writeln!(out, "average,{:.2}", self.mean_score);
        out
    }
}

/// Fold keys stratifying on the label combination. Combinations with fewer
/// than `folds` rows share one pooled key.
fn combination_keys(labels: &[ActivitySet], folds: usize) -> Vec<u16> {
    let mut counts = [0usize; 32];
    for l in labels {
        counts[l.bits() as usize] += 1;
    }
    const POOLED: u16 = 32;
    let pooled = labels.iter().filter(|l| counts[l.bits() as usize] < folds).count();
    let largest = (0..32).max_by_key(|&b| (counts[b], std::cmp::Reverse(b))).unwrap_or(0) as u16;
    labels
        .iter()
        .map(|l| {
            if counts[l.bits() as usize] >= folds {
                l.bits() as u16
            } else if pooled >= folds {
                POOLED
            } else {
                largest
            }
        })
        .collect()
}

/// Outer stratified k-fold around [`train_pipeline`]: every fold fits its
/// own projections, selections and committees on the training part only.
pub fn evaluate(data: &Dataset, cfg: &TrainConfig, outer_folds: usize) -> Result<EvaluationReport, PipelineError> {
    let keys = combination_keys(&data.labels, outer_folds);
    let assignment = stratified_folds_by_key(&keys, outer_folds, cfg.seed)?;
    let mut pooled = [Confusion::default(); 5];
    let mut folds = Vec::with_capacity(outer_folds);
    for f in 0..outer_folds {
        let train_rows: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != f).collect();
        let test_rows: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == f).collect();
        let fold_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, 100 + f as u64),
            ..cfg.clone()
        };
        let model = train_pipeline(&data.select_rows(&train_rows), &fold_cfg)?;
        let test = data.select_rows(&test_rows);
        let predicted = model.predict(&test.features)?;
        for (p, t) in predicted.iter().zip(&test.labels) {
            for a in Activity::ALL {
                pooled[a.index()].record(p.contains(a), t.contains(a));
            }
        }
        folds.push(FoldResult {
            fold: f,
            train_rows: train_rows.len(),
            test_rows: test_rows.len(),
            score: ensemble_score(&predicted, &test.labels)?,
            members: model
                .ensemble
                .committees
                .iter()
                .map(|c| c.members.iter().map(|m| m.spec.to_string()).collect())
                .collect(),
            attributes: model.classes.iter().map(|c| c.attributes.clone()).collect(),
        });
    }
    let per_class = Activity::ALL
        .iter()
        .map(|&class| {
            Ok(ClassResult {
                class,
                metrics: compute_metrics(pooled[class.index()])?,
            })
        })
        .collect::<Result<_, LearnError>>()?;
    let mean_score = folds.iter().map(|f| f.score).sum::<f64>() / folds.len() as f64;
    Ok(EvaluationReport {
        transport: cfg.transport,
        seed: cfg.seed,
        outer_folds,
        per_class,
        folds,
        mean_score,
    })
}
