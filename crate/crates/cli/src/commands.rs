//! One function per subcommand. Each resolves its arguments against the
//! defaults, reads its inputs, and writes its artifacts atomically.

use std::path::{Path, PathBuf};

use insightlens_core::attribution::{
    background_sample, explain_all, summarize as summarize_attributions, ClassChoice, FeatureImportance, Mode,
    ScatterRow, EXACT_MAX_FEATURES,
};
use insightlens_core::eventlog::{
    ingest as ingest_events, summarize, write_logs, IngestConfig, SessionSummary, DEFAULT_HOVER_MIN_MS,
    DEFAULT_IDLE_MS,
};
use insightlens_core::features::{
    aggregates_table, build_matrix, participant_aggregates, FeatureKind, FeatureMatrix, Target,
};
use insightlens_core::learn::{
    evaluate as evaluate_model, grouped_split, train_forest, train_linear, Classifier, Dataset, ForestParams,
    LinearParams, Model, ModelDocument, ModelKind, SplitPlan,
};
use insightlens_core::model::{write_notes, NoteId, ParticipantId};
use insightlens_core::patterns::{mine_patterns as mine, MinerConfig, PatternSet};
use insightlens_core::simulator::{generate_cohort, ProfileSet};
use insightlens_core::stats::{run_battery, NumericTable, DEFAULT_BOOTSTRAP};
use insightlens_service::{open_state, serve_state, ServiceConfig};
use serde::Serialize;

use crate::args::*;
use crate::files::*;
use crate::CliError;

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let out_dir = required(a.out_dir.as_ref(), "--out-dir")?;
    let profiles = match &a.profile_file {
        Some(p) => {
            let p = input(Some(p), "--profile-file")?;
            let src = std::fs::read_to_string(p).map_err(|e| CliError::data(p.display(), e))?;
            ProfileSet::from_toml_str(&src).map_err(|e| CliError::data(p.display(), e))?
        }
        None => ProfileSet::builtin(),
    };
    let participants = a.participants.unwrap_or(DEFAULT_PARTICIPANTS);
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let cohort = generate_cohort(&profiles, participants, seed).map_err(|e| CliError::data("simulate", e))?;

    let mut events = Vec::new();
    write_logs(&cohort.logs, &mut events).map_err(|e| CliError::data("simulate", e))?;
    write_atomic(&out_dir.join("events.jsonl"), &events)?;
    let mut notes = Vec::new();
    write_notes(&cohort.notes, &mut notes).map_err(|e| CliError::data("simulate", e))?;
    write_atomic(&out_dir.join("notes.jsonl"), &notes)?;

    #[derive(Serialize)]
    struct Assignment<'a> {
        participant: &'a ParticipantId,
        profile: &'a str,
    }
    #[derive(Serialize)]
    struct Assignments<'a> {
        seed: u64,
        assignments: Vec<Assignment<'a>>,
    }
    let assignments =
        cohort.assignments.iter().map(|(participant, profile)| Assignment { participant, profile }).collect();
    write_versioned(&out_dir.join("assignments.json"), Assignments { seed, assignments })?;

    let n_events: usize = cohort.logs.iter().map(|l| l.events.len()).sum();
    println!(
        "simulated {participants} participants: {n_events} events, {} notes -> {}",
        cohort.notes.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let events = input(a.events.as_ref(), "--events")?;
    let out = required(a.out.as_ref(), "--out")?;
    let hover_min_ms = a.hover_min_ms.unwrap_or(DEFAULT_HOVER_MIN_MS);
    let idle_ms = a.idle_ms.unwrap_or(DEFAULT_IDLE_MS);
    if idle_ms <= 0 {
        return Err(CliError::Usage("--idle-ms must be positive".into()));
    }
    let ingested = ingest_events(open(events)?, IngestConfig { hover_min_ms })
        .map_err(|e| CliError::data(events.display(), e))?;

    let mut bytes = Vec::new();
    write_logs(&ingested.logs, &mut bytes).map_err(|e| CliError::data(out.display(), e))?;
    write_atomic(out, &bytes)?;

    if let Some(path) = &a.summary {
        #[derive(Serialize)]
        struct Summary {
            hover_min_ms: u64,
            idle_ms: i64,
            records: usize,
            dropped_short_hovers: usize,
            sessions: Vec<SessionSummary>,
        }
        let sessions = ingested
            .logs
            .iter()
            .map(|l| summarize(l, idle_ms).map_err(|_| CliError::data(events.display(), "empty session log")))
            .collect::<Result<_, _>>()?;
        write_versioned(
            path,
            Summary {
                hover_min_ms,
                idle_ms,
                records: ingested.records,
                dropped_short_hovers: ingested.dropped_short_hovers,
                sessions,
            },
        )?;
    }
    println!(
        "{} records, {} short mouse-overs dropped, {} participants",
        ingested.records,
        ingested.dropped_short_hovers,
        ingested.logs.len()
    );
    Ok(())
}

pub fn mine_patterns(a: MineArgs) -> Result<(), CliError> {
    let events = input(a.events.as_ref(), "--events")?;
    let out = required(a.out.as_ref(), "--out")?;
    let d = MinerConfig::default();
    let config = MinerConfig {
        t1_fraction: a.t1.unwrap_or(d.t1_fraction),
        t2_fraction: a.t2.unwrap_or(d.t2_fraction),
        min_len: a.min_len.unwrap_or(d.min_len),
        max_len: a.max_len.unwrap_or(d.max_len),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let logs = read_logs(events)?;
    let set = mine(&logs, &config).map_err(|e| CliError::data(events.display(), e))?;
    write_versioned(out, &set)?;
    println!(
        "{} participants: {} run patterns, {} candidates (support > {}), {} final patterns (support > {})",
        set.participants,
        set.run_patterns.len(),
        set.sequence_candidates.len(),
        set.thresholds.candidate_min_exclusive,
        set.final_patterns.len(),
        set.thresholds.final_min_exclusive
    );
    Ok(())
}

/// The pattern set, read only when the feature kind needs it.
fn load_patterns(kind: FeatureKind, path: Option<&PathBuf>) -> Result<Option<PatternSet>, CliError> {
    match kind {
        FeatureKind::Patterns => Ok(Some(read_versioned(input(path, "--patterns")?)?)),
        _ => Ok(None),
    }
}

pub fn build_features(a: BuildFeaturesArgs) -> Result<(), CliError> {
    let events = input(a.events.as_ref(), "--events")?;
    let notes = input(a.notes.as_ref(), "--notes")?;
    if a.out.is_none() && a.aggregates_out.is_none() {
        return Err(CliError::Usage("nothing to write: give --out, --aggregates-out or both".into()));
    }
    let kind = a.features.unwrap_or(FeatureKind::Actions);
    let patterns = match a.out {
        Some(_) => load_patterns(kind, a.patterns.as_ref())?,
        None => None,
    };
    let logs = read_logs(events)?;
    let notes = read_note_file(notes)?;

    if let Some(out) = &a.out {
        let matrix = build_matrix(&notes, &logs, kind, a.target, patterns.as_ref())
            .map_err(|e| CliError::data("building features", e))?;
        let mut csv = Vec::new();
        matrix.write_csv(&mut csv).map_err(|e| CliError::data(out.display(), e))?;
        write_atomic(out, &csv)?;
        println!("{} notes x {} {} features -> {}", matrix.rows.len(), matrix.registry.len(), kind.as_str(), out.display());
    }
    if let Some(out) = &a.aggregates_out {
        let table = aggregates_table(&participant_aggregates(&notes, &logs));
        let mut csv = Vec::new();
        table.write_csv(&mut csv).map_err(|e| CliError::data(out.display(), e))?;
        write_atomic(out, &csv)?;
        println!("{} participant aggregates -> {}", table.rows.len(), out.display());
    }
    Ok(())
}

/// The feature matrix for a learner: read from `--table`, or built from
/// events and notes. `kind` of `None` accepts whatever the table holds.
fn load_matrix(d: DataArgs<'_>, kind: Option<FeatureKind>, target: Target) -> Result<FeatureMatrix, CliError> {
    if let Some(table) = d.table {
        if d.events.is_some() || d.notes.is_some() {
            return Err(CliError::Usage("--table replaces --events and --notes; give one or the other".into()));
        }
        let table = input(Some(table), "--table")?;
        let matrix = FeatureMatrix::read_csv(open(table)?).map_err(|e| CliError::data(table.display(), e))?;
        if let Some(kind) = kind.filter(|k| *k != matrix.registry.kind) {
            return Err(CliError::data(
                table.display(),
                format!("table holds {} features, expected {}", matrix.registry.kind.as_str(), kind.as_str()),
            ));
        }
        return Ok(matrix);
    }
    let events = input(d.events, "--events")?;
    let notes = input(d.notes, "--notes")?;
    let kind = kind.unwrap_or(FeatureKind::Actions);
    let patterns = load_patterns(kind, d.patterns)?;
    let logs = read_logs(events)?;
    let notes = read_note_file(notes)?;
    build_matrix(&notes, &logs, kind, Some(target), patterns.as_ref()).map_err(|e| CliError::data("building features", e))
}

fn dataset(matrix: &FeatureMatrix, target: Target) -> Result<Dataset, CliError> {
    Dataset::from_matrix(matrix, target).map_err(|e| CliError::data("feature table", e))
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let out = required(a.out.as_ref(), "--out")?;
    let target = a.target.unwrap_or(Target::Category);
    let fraction = a.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION);
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!("--train-fraction must lie strictly between 0 and 1, got {fraction}")));
    }
    let n_trees = a.n_trees.unwrap_or(ForestParams::default().n_trees);
    if n_trees == 0 {
        return Err(CliError::Usage("--n-trees must be at least 1".into()));
    }
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let kind = a.model_kind.unwrap_or(ModelKind::Forest);

    let matrix = load_matrix(a.data(), a.features, target)?;
    let data = dataset(&matrix, target)?;
    let plan = grouped_split(&data, fraction, seed).map_err(|e| CliError::data("split", e))?;
    let (train, test) = data.apply(&plan);
    let model = match kind {
        ModelKind::Forest => train_forest(&train, &ForestParams { n_trees, ..ForestParams::default() }, seed, 0)
            .map(Model::Forest),
        ModelKind::Linear => train_linear(&train, &LinearParams::default(), seed).map(Model::Linear),
    }
    .map_err(|e| CliError::data("training", e))?;
    let doc = ModelDocument::new(target, matrix.registry.kind, model);
    let mut bytes = doc.to_json().into_bytes();
    bytes.push(b'\n');
    write_atomic(out, &bytes)?;
    if let Some(path) = &a.split_out {
        write_versioned(path, &plan)?;
    }
    println!(
        "{} on {} {} features for {}: {} training notes, {} held out (label divergence {:.3})",
        match kind {
            ModelKind::Forest => "forest",
            ModelKind::Linear => "linear",
        },
        matrix.registry.len(),
        matrix.registry.kind.as_str(),
        target.as_str(),
        train.len(),
        test.len(),
        plan.divergence
    );
    Ok(())
}

/// `--model`, where absence is a data condition rather than a usage error.
fn load_model(path: Option<&PathBuf>) -> Result<ModelDocument, CliError> {
    let path = match path {
        Some(p) if p.is_file() => p,
        Some(p) => return Err(CliError::Data(format!("no-model-loaded: --model {} does not exist", p.display()))),
        None => return Err(CliError::Data("no-model-loaded: pass --model".into())),
    };
    let src = std::fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
    ModelDocument::from_json(&src).map_err(|e| CliError::data(path.display(), e))
}

/// Labelled rows for a saved model, checked against its feature columns.
fn model_dataset(doc: &ModelDocument, d: DataArgs<'_>) -> Result<Dataset, CliError> {
    let matrix = load_matrix(d, Some(doc.feature_kind), doc.target)?;
    if matrix.registry.names != doc.model.feature_names() {
        return Err(CliError::Data(format!(
            "feature columns differ from the model's ({} vs {}); rebuild with the pattern set used for training",
            matrix.registry.len(),
            doc.model.feature_names().len()
        )));
    }
    dataset(&matrix, doc.target)
}

fn read_split(path: &Path) -> Result<SplitPlan, CliError> {
    read_versioned(path)
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let doc = load_model(a.model.as_ref())?;
    let split = input(a.split.as_ref(), "--split")?;
    let out = required(a.out.as_ref(), "--out")?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let plan = read_split(split)?;
    let data = model_dataset(&doc, a.data())?;
    let (_, test) = data.apply(&plan);
    let report = evaluate_model(&doc.model, &test, seed).map_err(|e| CliError::data("evaluate", e))?;
    write_json(out, &report)?;
    println!(
        "{} on {} test notes: kappa {:.3} ± {:.3} ({}), accuracy {:.3} ± {:.3}, macro F1 {:.3}",
        doc.target.as_str(),
        report.n_test,
        report.kappa.value,
        report.kappa.half_width,
        report.kappa_band,
        report.accuracy.value,
        report.accuracy.half_width,
        report.macro_f1.value
    );
    Ok(())
}

pub fn explain(a: ExplainArgs) -> Result<(), CliError> {
    let doc = load_model(a.model.as_ref())?;
    let out = required(a.out.as_ref(), "--out")?;
    let split = a.split.as_ref().map(|p| input(Some(p), "--split")).transpose()?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let top_k = a.top_k.unwrap_or(DEFAULT_TOP_K);
    let permutations = a.permutations.unwrap_or(DEFAULT_PERMUTATIONS);
    let n_background = a.background.unwrap_or(DEFAULT_BACKGROUND);
    if n_background == 0 {
        return Err(CliError::Usage("--background must be at least 1".into()));
    }

    let data = model_dataset(&doc, a.data())?;
    let (background_rows, explained) = match split {
        Some(p) => {
            let (train, test) = data.apply(&read_split(p)?);
            (train.x, test)
        }
        None => (data.x.clone(), data),
    };
    let limit = a.max_instances.unwrap_or(usize::MAX);
    let instances: Vec<(NoteId, Vec<f64>)> =
        explained.note_ids.iter().cloned().zip(explained.x.iter().cloned()).take(limit).collect();
    if instances.is_empty() {
        return Err(CliError::Data("no labelled notes to explain".into()));
    }
    let d = doc.model.feature_names().len();
    let mode = match a.mode.unwrap_or_default() {
        ExplainMode::Auto if d <= EXACT_MAX_FEATURES => Mode::Exact,
        ExplainMode::Exact => Mode::Exact,
        ExplainMode::Auto | ExplainMode::Sampled => Mode::Sampled { n_permutations: permutations },
    };
    let background = background_sample(&background_rows, n_background, seed);
    let attributions = explain_all(&doc.model, &instances, &background, ClassChoice::Predicted, mode, seed)
        .map_err(|e| CliError::data("explain", e))?;
    let summary = summarize_attributions(&attributions, top_k).map_err(|e| CliError::data("explain", e))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        target: Target,
        feature_kind: FeatureKind,
        mode: Mode,
        explained_class: &'static str,
        n_instances: usize,
        n_background: usize,
        seed: u64,
        top: &'a [FeatureImportance],
        ranking: &'a [FeatureImportance],
    }
    write_versioned(
        out,
        Summary {
            target: doc.target,
            feature_kind: doc.feature_kind,
            mode,
            explained_class: "predicted",
            n_instances: instances.len(),
            n_background: background.len(),
            seed,
            top: &summary.top,
            ranking: &summary.ranking,
        },
    )?;
    if let Some(path) = &a.scatter_out {
        #[derive(Serialize)]
        struct Scatter<'a> {
            points: &'a [ScatterRow],
        }
        write_versioned(path, Scatter { points: &summary.scatter })?;
    }
    println!("{} notes explained against {} background rows; top features:", instances.len(), background.len());
    for f in &summary.top {
        println!("  {:<32} {:.4}", f.feature, f.mean_abs_phi);
    }
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<(), CliError> {
    let aggregates = input(a.aggregates.as_ref(), "--aggregates")?;
    let out = required(a.out.as_ref(), "--out")?;
    let n_bootstrap = a.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP);
    if n_bootstrap == 0 {
        return Err(CliError::Usage("--bootstrap must be at least 1".into()));
    }
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let table = NumericTable::read_csv(open(aggregates)?).map_err(|e| CliError::data(aggregates.display(), e))?;
    let report = run_battery(&table, n_bootstrap, seed);
    write_json(out, &report)?;
    println!(
        "{} correlations ({} with |tau-b| above the reporting floor, {} undefined), {} paired tests",
        report.correlations.len(),
        report.reported.len(),
        report.undefined.len(),
        report.tests.len()
    );
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let data_dir = required(a.data_dir.as_ref(), "--data-dir")?;
    let model = a.model.as_ref().map(|p| input(Some(p), "--model")).transpose()?;
    let report = a.report.as_ref().map(|p| input(Some(p), "--report")).transpose()?;
    if report.is_some() && model.is_none() {
        return Err(CliError::Usage("--report needs --model".into()));
    }
    let bind = a.bind.unwrap_or_else(|| DEFAULT_BIND.parse().expect("valid default address"));
    let config = ServiceConfig {
        data_dir: data_dir.clone(),
        bind,
        token: a.token.clone(),
        model: model.map(Path::to_path_buf),
        report: report.map(Path::to_path_buf),
        snapshot_every: a.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY),
        hover_min_ms: a.hover_min_ms.unwrap_or(DEFAULT_HOVER_MIN_MS),
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let state = open_state(&config).map_err(|e| CliError::data("loading service state", e))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::data("starting runtime", e))?;
    runtime.block_on(serve_state(state, bind)).map_err(|e| CliError::data(format!("serving on {bind}"), e))
}
