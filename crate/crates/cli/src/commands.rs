use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;

use rdpscope_core::capture::CaptureError;
use rdpscope_core::ensemble::{ensemble_score, EnsembleError};
use rdpscope_core::flowstats::{export_features, FeatureTable, FlowError, DCT_NAME, SCHEMA_VERSION};
use rdpscope_core::learners::{compute_metrics, train as fit_model, Confusion, ModelSpec};
use rdpscope_core::pipeline::{
    derive_seed, detect_capture, evaluate as evaluate_pipeline, extract_capture, train_pipeline, ClassResult, Dataset,
    EvaluationReport, ExtractConfig, FoldResult, PipelineError, TrainConfig, TrainedPipeline,
};
use rdpscope_core::selection::{
    select_attributes, shapley_rank, subsample_background, Selection, ShapleyConfig, ShapleyMode,
    DEFAULT_MAX_BACKGROUND,
};
use rdpscope_core::sidechannel::{SideChannelConfig, WindowReport};
use rdpscope_core::synthgen::{
    generate_corpus, read_corpus_index, table_profiles, ActivityProfile, SynthError, LOCAL_ADDR,
};
use rdpscope_core::transforms::{AugmentConfig, Augmenter, TransformError};
use rdpscope_core::windowing::WindowError;
use rdpscope_core::{Activity, FeatureSchema, FeatureVector, LocalEndpoint};

use crate::meta::{processing, write_csv, write_json, RunMeta};
use crate::{
    CliError, CliResult, DetectArgs, EvaluateArgs, ExtractArgs, RankArgs, RankerKind, SynthArgs, TrainArgs,
    TransformArgs, Transport,
};

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(anyhow!("{msg}"))
}

/// Malformed or inconsistent inputs are the caller's to fix; everything
/// else is a processing failure.
fn pipeline_error(e: PipelineError) -> CliError {
    use PipelineError as P;
    let caller = matches!(
        &e,
        P::Window(WindowError::MissingLabel(_) | WindowError::LabelSchemaError { .. } | WindowError::ZeroLength)
            | P::Flow(FlowError::Parse { .. })
            | P::Capture(
                CaptureError::MalformedCapture(_)
                    | CaptureError::TruncatedRecord { .. }
                    | CaptureError::InvalidEndpoint(_)
            )
            | P::Transform(TransformError::IndexOutOfRange { .. } | TransformError::TooManyComponents { .. })
            | P::Ensemble(EnsembleError::TransportMismatch { .. } | EnsembleError::SchemaMismatch(_))
            | P::Synth(SynthError::InvalidProfile(_) | SynthError::EmptyCorpus)
            | P::Input { .. }
    );
    if caller {
        CliError::Validation(e.into())
    } else {
        CliError::Processing(e.into())
    }
}

fn read_input(path: &Path, meta: &mut RunMeta) -> CliResult<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    meta.input(path, &bytes);
    Ok(bytes)
}

fn read_text(path: &Path, meta: &mut RunMeta) -> CliResult<String> {
    String::from_utf8(read_input(path, meta)?).map_err(|_| invalid(format!("{} is not UTF-8 text", path.display())))
}

fn parse_local(s: &str) -> CliResult<LocalEndpoint> {
    s.parse().map_err(|e: CaptureError| invalid(e))
}

fn window_us(seconds: u64) -> CliResult<u64> {
    if seconds == 0 {
        return Err(invalid("--window-sec must be positive"));
    }
    Ok(seconds * 1_000_000)
}

fn check_selection(mass: f64, cap: usize) -> CliResult<()> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(invalid(format!("--select-mass must be in (0, 1], got {mass}")));
    }
    if cap == 0 {
        return Err(invalid("--select-cap must be at least 1"));
    }
    Ok(())
}

fn load_dataset(path: &Path, meta: &mut RunMeta) -> CliResult<Dataset> {
    let text = read_text(path, meta)?;
    let table = FeatureTable::from_csv(&text)
        .with_context(|| path.display().to_string())
        .map_err(CliError::Validation)?;
    if table.rows.is_empty() {
        return Err(invalid(format!("{} has no rows", path.display())));
    }
    Dataset::from_table(&table).map_err(pipeline_error)
}

fn load_base_dataset(path: &Path, meta: &mut RunMeta) -> CliResult<Dataset> {
    let data = load_dataset(path, meta)?;
    if data.features.names() != FeatureSchema::base().names.as_slice() {
        let hint = if data.features.column_index(DCT_NAME).is_some() {
            " (derived attributes are fitted internally; pass the output of `extract`)"
        } else {
            ""
        };
        return Err(invalid(format!("{} does not have the base attribute schema{hint}", path.display())));
    }
    Ok(data)
}

fn features_csv(data: &Dataset) -> CliResult<String> {
    let schema = FeatureSchema {
        version: SCHEMA_VERSION,
        names: data.features.names().to_vec(),
    };
    let vectors: Vec<FeatureVector> = data
        .features
        .rows()
        .zip(&data.labels)
        .map(|(r, l)| FeatureVector {
            values: r.to_vec(),
            window_start: 0,
            labels: *l,
        })
        .collect();
    export_features(&vectors, &schema).map_err(processing)
}

pub fn extract(a: &ExtractArgs, hash: &str) -> CliResult<()> {
    let window_us = window_us(a.window_sec)?;
    let mut meta = RunMeta::new("extract", hash, Vec::new());
    let mut vectors = Vec::new();
    let mut partial = 0;
    let mut skipped = 0;
    let local = match (&a.local_ip, a.input.is_dir()) {
        (Some(s), _) => parse_local(s)?,
        (None, true) => LocalEndpoint::new(LOCAL_ADDR),
        (None, false) => return Err(invalid("--local-ip is required for a capture file")),
    };
    let cfg = ExtractConfig {
        window_us,
        ..ExtractConfig::new(local)
    };
    let mut run = |pcap: &[u8], labels: &str| -> CliResult<()> {
        let ex = extract_capture(pcap, labels, &cfg).map_err(pipeline_error)?;
        partial += ex.partial_windows;
        skipped += ex.skipped.total();
        vectors.extend(ex.vectors);
        Ok(())
    };
    if a.input.is_dir() {
        let index = read_corpus_index(&a.input).map_err(|e| invalid(format!("{}: {e}", a.input.display())))?;
        for entry in &index.entries {
            let pcap = read_input(&a.input.join(&entry.pcap), &mut meta)?;
            let labels = read_text(&a.input.join(&entry.labels), &mut meta)?;
            meta.seeds.push(entry.seed);
            run(&pcap, &labels)?;
        }
    } else {
        let labels_path = a
            .labels
            .as_ref()
            .ok_or_else(|| invalid("missing label file: --labels is required for a capture file"))?;
        if !labels_path.is_file() {
            return Err(invalid(format!("missing label file: {}", labels_path.display())));
        }
        let pcap = read_input(&a.input, &mut meta)?;
        let labels = read_text(labels_path, &mut meta)?;
        run(&pcap, &labels)?;
    }
    let csv = export_features(&vectors, &FeatureSchema::base()).map_err(processing)?;
    let meta = meta.with_details(json!({
        "windows": vectors.len(),
        "partial_windows": partial,
        "skipped_frames": skipped,
        "window_us": window_us,
        "local": cfg.local,
    }));
    write_csv(&a.out, &csv, &meta)?;
    eprintln!("extract: {} windows -> {}", vectors.len(), a.out.display());
    Ok(())
}

pub fn transform(a: &TransformArgs, hash: &str) -> CliResult<()> {
    if a.components == 0 {
        return Err(invalid("--components must be at least 1"));
    }
    let mut meta = RunMeta::new("transform", hash, vec![a.seed]);
    let data = load_base_dataset(&a.input, &mut meta)?;
    let config = AugmentConfig {
        dct_index: a.dct_index,
        components: a.components,
        seed: a.seed,
    };
    let augmenter = Augmenter::fit(&data.features, config).map_err(|e| pipeline_error(e.into()))?;
    let augmented = Dataset {
        features: augmenter.augment(&data.features).map_err(processing)?,
        labels: data.labels.clone(),
    };
    let meta = meta.with_details(json!({
        "svd_components": augmenter.svd.k,
        "ica_components": augmenter.ica.k,
        "ica_converged": augmenter.ica.converged,
        "ica_weakly_identified": augmenter.ica.weakly_identified,
    }));
    write_csv(&a.out, &features_csv(&augmented)?, &meta)?;
    let manifest = a.out.with_extension("projections.json");
    write_json(&manifest, "augmenter", &augmenter, &meta)?;
    if augmenter.ica.converged == Some(false) {
        eprintln!("warning: ICA did not converge; see {}", manifest.display());
    }
    eprintln!("transform: {} rows -> {}", augmented.len(), a.out.display());
    Ok(())
}

fn ranker_spec(kind: RankerKind, seed: u64) -> ModelSpec {
    match kind {
        RankerKind::Rf => ModelSpec::random_forest(30, seed),
        RankerKind::Tree => ModelSpec::decision_tree().with_seed(seed),
        RankerKind::Knn => ModelSpec::knn(5).with_seed(seed),
        RankerKind::Ada => ModelSpec::adaboost(100).with_seed(seed),
    }
}

#[derive(Debug, Serialize)]
struct ClassSelection {
    class: Activity,
    ranker: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

fn attribution_file(dir: &Path, class: Activity) -> std::path::PathBuf {
    dir.join(format!("attribution_{}.csv", class.column()))
}

pub fn rank(a: &RankArgs, hash: &str) -> CliResult<()> {
    check_selection(a.select_mass, a.select_cap)?;
    if a.samples == 0 || a.targets == 0 {
        return Err(invalid("--samples and --targets must be at least 1"));
    }
    let mut meta = RunMeta::new("rank", hash, vec![a.seed]);
    let data = load_dataset(&a.input, &mut meta)?;
    let mut out = Vec::new();
    for class in Activity::ALL {
        let class_seed = derive_seed(a.seed, class.index() as u64 + 1);
        meta.seeds.push(class_seed);
        let spec = ranker_spec(a.model, class_seed);
        let labels = data.class_labels(class);
        let positives = labels.iter().filter(|l| **l).count();
        if positives == 0 || positives == labels.len() {
            out.push(ClassSelection {
                class,
                ranker: spec.to_string(),
                selection: None,
                skipped: Some("all rows share one label".into()),
            });
            continue;
        }
        let model = fit_model(&spec, &data.features, &labels).map_err(|e| pipeline_error(e.into()))?;
        let targets = subsample_background(&data.features, a.targets, class_seed);
        let config = ShapleyConfig {
            mode: ShapleyMode::MonteCarlo {
                samples_per_row: a.samples,
            },
            seed: class_seed,
            max_background: DEFAULT_MAX_BACKGROUND,
        };
        let report = shapley_rank(&model, class, &data.features, &targets, &config)
            .map_err(|e| pipeline_error(e.into()))?;
        write_csv(&attribution_file(&a.out, class), &report.to_csv(), &meta)?;
        out.push(ClassSelection {
            class,
            ranker: spec.to_string(),
            selection: Some(select_attributes(&report, a.select_mass, a.select_cap)),
            skipped: None,
        });
    }
    write_json(&a.out.join("selection.json"), "classes", &out, &meta)?;
    eprintln!("rank: attributions -> {}", a.out.display());
    Ok(())
}

struct Knobs {
    transport: Transport,
    seed: u64,
    inner_folds: usize,
    dct_index: usize,
    components: usize,
    select_mass: f64,
    select_cap: usize,
}

fn train_config(k: &Knobs) -> CliResult<TrainConfig> {
    check_selection(k.select_mass, k.select_cap)?;
    if k.inner_folds < 2 {
        return Err(invalid("at least 2 folds are required"));
    }
    if k.components == 0 {
        return Err(invalid("--components must be at least 1"));
    }
    let mut cfg = TrainConfig::new(k.transport.profile(), k.seed);
    cfg.inner_folds = k.inner_folds;
    cfg.augment.dct_index = k.dct_index;
    cfg.augment.components = k.components;
    cfg.select_mass = k.select_mass;
    cfg.select_cap = k.select_cap;
    Ok(cfg)
}

fn class_seeds(seed: u64) -> Vec<u64> {
    std::iter::once(seed)
        .chain(Activity::ALL.iter().map(|a| derive_seed(seed, a.index() as u64 + 1)))
        .collect()
}

fn training_report(model: &TrainedPipeline) -> String {
    let mut out = String::from("class,model,mean_accuracy,std_accuracy,mean_precision,mean_recall,mean_f1,selected\n");
    for (c, committee) in model.classes.iter().zip(&model.ensemble.committees) {
        for r in &c.cv {
            let selected = committee.members.iter().any(|m| m.spec == r.spec);
            let _ = writeln!(
                out,
                "{},\"{}\",{:.2},{:.2},{:.2},{:.2},{:.2},{}",
                c.class,
                r.spec,
                r.mean_accuracy,
                r.std_accuracy,
                r.mean_precision,
                r.mean_recall,
                r.mean_f1,
                u8::from(selected)
            );
        }
    }
    out
}

pub fn train(a: &TrainArgs, hash: &str) -> CliResult<()> {
    let cfg = train_config(&Knobs {
        transport: a.transport,
        seed: a.seed,
        inner_folds: a.folds,
        dct_index: a.dct_index,
        components: a.components,
        select_mass: a.select_mass,
        select_cap: a.select_cap,
    })?;
    let mut meta = RunMeta::new("train", hash, class_seeds(a.seed));
    let data = load_base_dataset(&a.input, &mut meta)?;
    let model = train_pipeline(&data, &cfg).map_err(pipeline_error)?;
    write_json(&a.out.join("model.json"), "pipeline", &model, &meta)?;
    write_json(&a.out.join("ensemble.json"), "ensemble", &model.ensemble, &meta)?;
    write_csv(&a.out.join("training_report.csv"), &training_report(&model), &meta)?;
    for c in &model.classes {
        write_csv(&attribution_file(&a.out, c.class), &c.attribution.to_csv(), &meta)?;
    }
    eprintln!("train: {} rows, model -> {}", data.len(), a.out.join("model.json").display());
    Ok(())
}

#[derive(Deserialize)]
struct ModelFile {
    pipeline: TrainedPipeline,
}

fn score_saved_model(a: &EvaluateArgs, data: &Dataset, meta: &mut RunMeta) -> CliResult<EvaluationReport> {
    let path = a.model.as_ref().expect("model path given");
    let text = read_text(path, meta)?;
    let model: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a model written by `train`", path.display()))
        .map_err(CliError::Validation)?;
    let model = model.pipeline;
    model
        .ensemble
        .expect_transport(a.transport.profile())
        .map_err(|e| pipeline_error(e.into()))?;
    let predicted = model.predict(&data.features).map_err(pipeline_error)?;
    let mut pooled = [Confusion::default(); 5];
    for (p, t) in predicted.iter().zip(&data.labels) {
        for c in Activity::ALL {
            pooled[c.index()].record(p.contains(c), t.contains(c));
        }
    }
    let per_class = Activity::ALL
        .iter()
        .map(|&class| {
            Ok(ClassResult {
                class,
                metrics: compute_metrics(pooled[class.index()])?,
            })
        })
        .collect::<Result<Vec<_>, rdpscope_core::learners::LearnError>>()
        .map_err(processing)?;
    let score = ensemble_score(&predicted, &data.labels).map_err(|e| pipeline_error(e.into()))?;
    Ok(EvaluationReport {
        transport: model.ensemble.transport,
        seed: model.config.seed,
        outer_folds: 1,
        per_class,
        folds: vec![FoldResult {
            fold: 0,
            train_rows: 0,
            test_rows: data.len(),
            score,
            members: model
                .ensemble
                .committees
                .iter()
                .map(|c| c.members.iter().map(|m| m.spec.to_string()).collect())
                .collect(),
            attributes: model.classes.iter().map(|c| c.attributes.clone()).collect(),
        }],
        mean_score: score,
    })
}

pub fn evaluate(a: &EvaluateArgs, hash: &str) -> CliResult<()> {
    let mut meta = RunMeta::new("evaluate", hash, Vec::new());
    let report = if a.model.is_some() {
        let data = load_base_dataset(&a.input, &mut meta)?;
        score_saved_model(a, &data, &mut meta)?
    } else {
        if a.folds < 2 {
            return Err(invalid("--folds must be at least 2"));
        }
        let cfg = train_config(&Knobs {
            transport: a.transport,
            seed: a.seed,
            inner_folds: a.inner_folds,
            dct_index: a.dct_index,
            components: a.components,
            select_mass: a.select_mass,
            select_cap: a.select_cap,
        })?;
        let data = load_base_dataset(&a.input, &mut meta)?;
        meta.seeds = std::iter::once(a.seed)
            .chain((0..a.folds).map(|f| derive_seed(a.seed, 100 + f as u64)))
            .collect();
        evaluate_pipeline(&data, &cfg, a.folds).map_err(pipeline_error)?
    };
    if meta.seeds.is_empty() {
        meta.seeds.push(report.seed);
    }
    write_csv(&a.out.join("metrics.csv"), &report.metrics_csv(), &meta)?;
    write_csv(&a.out.join("fold_scores.csv"), &report.scores_csv(), &meta)?;
    write_json(&a.out.join("evaluation.json"), "report", &report, &meta)?;
    eprint!("{}", report.metrics_csv());
    eprintln!("ensemble score: {:.2}", report.mean_score);
    Ok(())
}

#[derive(Debug, Serialize)]
struct DetectTotals {
    keystrokes: u64,
    move_packets: u64,
    click_packets: u64,
}

#[derive(Debug, Serialize)]
struct DetectReport {
    totals: DetectTotals,
    windows: Vec<WindowReport>,
}

pub fn detect(a: &DetectArgs, hash: &str) -> CliResult<()> {
    let window_us = window_us(a.window_sec)?;
    let local = parse_local(&a.local_ip)?;
    let mut meta = RunMeta::new("detect", hash, Vec::new());
    let pcap = read_input(&a.input, &mut meta)?;
    let config = SideChannelConfig {
        tolerance: a.tolerance,
        ..SideChannelConfig::default()
    };
    let windows = detect_capture(&pcap, &local, window_us, &config).map_err(pipeline_error)?;
    let totals = DetectTotals {
        keystrokes: windows.iter().map(|w| w.keystrokes.keystroke_estimate).sum(),
        move_packets: windows.iter().map(|w| w.mouse.move_packets).sum(),
        click_packets: windows.iter().map(|w| w.mouse.click_packets).sum(),
    };
    eprintln!(
        "detect: {} keystrokes, {} moves, {} clicks over {} windows",
        totals.keystrokes,
        totals.move_packets,
        totals.click_packets,
        windows.len()
    );
    write_json(&a.out, "report", &DetectReport { totals, windows }, &meta)
}

pub fn synth(a: &SynthArgs, hash: &str) -> CliResult<()> {
    let mut meta = RunMeta::new("synth", hash, Vec::new());
    let profiles: Vec<ActivityProfile> = match &a.input {
        Some(path) => {
            let text = read_text(path, &mut meta)?;
            serde_json::from_str(&text)
                .with_context(|| format!("{} is not a JSON list of profiles", path.display()))
                .map_err(CliError::Validation)?
        }
        None => {
            if a.windows == 0 {
                return Err(invalid("--windows must be positive"));
            }
            table_profiles(a.transport.synth(), a.windows, a.seed)
        }
    };
    meta.seeds = profiles.iter().map(|p| p.seed).collect();
    let manifest = generate_corpus(&profiles, &a.out).map_err(|e| pipeline_error(e.into()))?;
    write_json(&a.out.join("synth.meta.json"), "manifest", &manifest, &meta)?;
    let windows: u64 = manifest.entries.iter().map(|e| e.windows).sum();
    eprintln!("synth: {} traces, {windows} windows -> {}", manifest.entries.len(), a.out.display());
    Ok(())
}
