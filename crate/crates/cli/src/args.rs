//! Subcommand arguments.
//!
//! Every field is optional so that a value can come from the command line,
//! from the subcommand's section of a `--config` file, or from the default,
//! in that order of precedence. The same structs deserialize the config
//! sections, with kebab-case keys matching the flag names.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use insightlens_core::features::{FeatureKind, Target};
use insightlens_core::learn::ModelKind;
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PARTICIPANTS: usize = 158;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_PERMUTATIONS: usize = 2000;
pub const DEFAULT_BACKGROUND: usize = 100;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_SNAPSHOT_EVERY: usize = 100;

/// Fill unset fields from a config section.
pub trait Layer {
    fn layer(&mut self, file: Self);
}

macro_rules! layered {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Layer for $ty {
            fn layer(&mut self, file: Self) {
                $(if self.$field.is_none() {
                    self.$field = file.$field;
                })*
            }
        }
    };
}

/// The feature-table source shared by `train`, `evaluate` and `explain`:
/// a table written by `build-features`, or events and notes to build it from.
pub struct DataArgs<'a> {
    pub table: Option<&'a PathBuf>,
    pub events: Option<&'a PathBuf>,
    pub notes: Option<&'a PathBuf>,
    pub patterns: Option<&'a PathBuf>,
}

macro_rules! data_source {
    ($ty:ty) => {
        impl $ty {
            pub fn data(&self) -> DataArgs<'_> {
                DataArgs {
                    table: self.table.as_ref(),
                    events: self.events.as_ref(),
                    notes: self.notes.as_ref(),
                    patterns: self.patterns.as_ref(),
                }
            }
        }
    };
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Behaviour profile file (TOML) [default: built-in profiles]
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
    /// Number of simulated participants [default: 158]
    #[arg(long)]
    pub participants: Option<usize>,
    /// Master seed; every participant derives its own stream from it [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving events.jsonl, notes.jsonl and assignments.json
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
layered!(SimulateArgs { profile_file, participants, seed, out_dir });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Raw event log, one JSON record per line
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Mouse-overs shorter than this are dropped as accidental [default: 3000]
    #[arg(long)]
    pub hover_min_ms: Option<u64>,
    /// Gaps without interaction longer than this are idle time [default: 360000, six minutes]
    #[arg(long)]
    pub idle_ms: Option<i64>,
    /// Cleaned event log, grouped by participant
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-participant session summaries (JSON)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}
layered!(IngestArgs { events, hover_min_ms, idle_ms, out, summary });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MineArgs {
    /// Cleaned event log written by `ingest`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Candidate threshold: share of participants a sequence must exceed [default: 0.25].
    /// Raising it keeps fewer, more common candidates; tune together with --t2.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Final threshold: share of participants with a greedy match, at most --t1 [default: 0.20]
    #[arg(long)]
    pub t2: Option<f64>,
    /// Shortest sequence considered [default: 2]
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longest sequence considered [default: 10]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Pattern report (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(MineArgs { events, t1, t2, min_len, max_len, out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BuildFeaturesArgs {
    /// Cleaned event log written by `ingest`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Notes, one JSON object per line
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Feature kind: actions, references or patterns [default: actions]
    #[arg(long)]
    pub features: Option<FeatureKind>,
    /// Label column: category, overview_detail or prior_knowledge [default: none]
    #[arg(long)]
    pub target: Option<Target>,
    /// Pattern report from `mine-patterns`, needed for pattern features
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Per-note feature table (CSV)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-participant aggregate table (CSV) for `stats`
    #[arg(long)]
    pub aggregates_out: Option<PathBuf>,
}
layered!(BuildFeaturesArgs { events, notes, features, target, patterns, out, aggregates_out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Feature table written by `build-features` (replaces --events/--notes)
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Cleaned event log written by `ingest`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Notes, one JSON object per line
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Pattern report from `mine-patterns`, needed for pattern features
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Characteristic to predict: category, overview_detail or prior_knowledge [default: category]
    #[arg(long)]
    pub target: Option<Target>,
    /// Predictors: actions, references or patterns [default: actions]
    #[arg(long)]
    pub features: Option<FeatureKind>,
    /// forest or linear [default: forest]
    #[arg(long)]
    pub model_kind: Option<ModelKind>,
    /// Seed for the split and the learner [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trees in the forest [default: 500]
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Share of notes in the training side; participants never straddle sides [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Model document (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train/test split plan (JSON), read back by `evaluate` and `explain`
    #[arg(long)]
    pub split_out: Option<PathBuf>,
}

layered!(TrainArgs {
    table, events, notes, patterns, target, features, model_kind, seed, n_trees, train_fraction, out, split_out
});
data_source!(TrainArgs);

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// Feature table written by `build-features` (replaces --events/--notes)
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Cleaned event log written by `ingest`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Notes, one JSON object per line
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Pattern report from `mine-patterns`, needed for pattern features
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Model document written by `train`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Split plan written by `train`; the report covers its test side
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Seed for the bootstrap intervals [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation report (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

layered!(EvaluateArgs { table, events, notes, patterns, model, split, seed, out });
data_source!(EvaluateArgs);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMode {
    /// Exact when the model has few enough features, sampled otherwise
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExplainArgs {
    /// Feature table written by `build-features` (replaces --events/--notes)
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Cleaned event log written by `ingest`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Notes, one JSON object per line
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Pattern report from `mine-patterns`, needed for pattern features
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Model document written by `train`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Split plan; when given, test notes are explained against a training background
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Attribution mode [default: auto, exact up to 12 features]
    #[arg(long, value_enum)]
    pub mode: Option<ExplainMode>,
    /// Permutations per note in sampled mode [default: 2000]
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Background rows marginalised over, at most 200 [default: 100]
    #[arg(long)]
    pub background: Option<usize>,
    /// Explain at most this many notes [default: all]
    #[arg(long)]
    pub max_instances: Option<usize>,
    /// Features listed in the summary's top table [default: 10]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Seed for background and permutation draws [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Importance summary (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-note, per-feature attribution points (JSON)
    #[arg(long)]
    pub scatter_out: Option<PathBuf>,
}

layered!(ExplainArgs {
    table, events, notes, patterns, model, split, mode, permutations, background, max_instances, top_k, seed, out,
    scatter_out,
});
data_source!(ExplainArgs);

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct StatsArgs {
    /// Participant aggregate table written by `build-features --aggregates-out`
    #[arg(long)]
    pub aggregates: Option<PathBuf>,
    /// Bootstrap replicates per interval [default: 2000]
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Seed for the bootstrap [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Correlation and test report (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
layered!(StatsArgs { aggregates, bootstrap, seed, out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ServeArgs {
    /// Directory holding the journal and snapshots
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Listen address [default: 127.0.0.1:8080]
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Bearer token required on every route but /health [default: none, open access]
    #[arg(long)]
    pub token: Option<String>,
    /// Model document served by /characterize and /recommend
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Evaluation report whose agreement band accompanies predictions
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Journal records between snapshots, 0 for never [default: 100]
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Live mouse-overs shorter than this are dropped [default: 3000]
    #[arg(long)]
    pub hover_min_ms: Option<u64>,
}
layered!(ServeArgs { data_dir, bind, token, model, report, snapshot_every, hover_min_ms });
