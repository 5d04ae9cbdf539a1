//! Stage orchestration, artifact writing and the run manifest.
//!
//! Each stage reads only the configured inputs and the artifacts of earlier
//! stages in the output directory, so stages can run one at a time. Every
//! invocation ends by rewriting `manifest.json`, which lists all artifacts
//! with their SHA-256 hashes and marks failures.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::classify::{classify_corpus, parse_references, Labels};
use crate::config::RunConfig;
use crate::corpus::{parse_tweets, parse_users, validate_corpus, Corpus, TweetParseOptions};
use crate::design::{
    build_design_matrix, descriptive_stats, descriptives_table, effect_percent, vif, DesignMatrix, Dv, ModelKind, ModelSpec,
    REFERENCE_TYPE, VIF_THRESHOLD,
};
use crate::influence::{compute_metrics, metrics_table, read_metrics_csv, summarize_groups, MetricRecord};
use crate::netgraph::{build_network, export_network, node_attributes, CommNetwork};
use crate::synth::{generate_corpus, write_corpus_files};
use crate::table::{Cell, Table, TableFormat};
use crate::tweedie::{fit_tweedie_glm, wald_rows_table, wald_table, FitResult, TweedieError, TweedieSpec};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Classify,
    Graph,
    Metrics,
    Regress,
    Report,
    Synth,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Graph => "graph",
            Stage::Metrics => "metrics",
            Stage::Regress => "regress",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Ingest => 10,
            Stage::Classify => 11,
            Stage::Graph => 12,
            Stage::Metrics => 13,
            Stage::Regress => 14,
            Stage::Report => 15,
            Stage::Synth => 16,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn stage_error(stage: Stage, message: impl fmt::Display) -> StageError {
    StageError { stage, message: message.to_string() }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| stage_error(stage, e))
    }
}

/// Restricts `regress` to a subset of the configured fits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitSelection {
    pub dv: Option<Dv>,
    pub model: Option<ModelKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub format: TableFormat,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        let out_dir = config.out_dir.clone();
        let format = config.table_format;
        Self { config, out_dir, format }
    }

    fn write(&self, stage: Stage, name: &str, bytes: &[u8]) -> Result<(), StageError> {
        std::fs::create_dir_all(&self.out_dir).at(stage)?;
        std::fs::write(self.out_dir.join(name), bytes)
            .map_err(|e| StageError { stage, message: format!("writing {name}: {e}") })
    }

    fn write_table(&self, stage: Stage, stem: &str, table: &Table) -> Result<(), StageError> {
        let name = format!("{stem}.{}", self.format.extension());
        self.write(stage, &name, table.render(self.format).as_bytes())
    }

    fn open(&self, stage: Stage, name: &str, producer: Stage) -> Result<File, StageError> {
        File::open(self.out_dir.join(name)).map_err(|e| StageError {
            stage,
            message: format!("cannot read {name} (run `{producer}` first): {e}"),
        })
    }

    /// Parses and validates the corpus and writes `validation.json`. Fatal
    /// findings abort after the report is written.
    pub fn ingest(&self) -> Result<Corpus, StageError> {
        let stage = Stage::Ingest;
        let err = |m: String| stage_error(stage, m);
        let tweets_path = self.config.tweets.as_ref().ok_or_else(|| err("input.tweets is not configured".into()))?;
        let users_path = self.config.users.as_ref().ok_or_else(|| err("input.users is not configured".into()))?;
        let tweets_file = File::open(tweets_path).map_err(|e| err(format!("{}: {e}", tweets_path.display())))?;
        let users_file = File::open(users_path).map_err(|e| err(format!("{}: {e}", users_path.display())))?;
        let tweets = parse_tweets(BufReader::new(tweets_file), &TweetParseOptions::default()).at(stage)?;
        let users = parse_users(BufReader::new(users_file)).at(stage)?;
        let corpus = Corpus { tweets: tweets.tweets, users: users.users, periods: self.config.periods.clone() };
        let report = validate_corpus(&corpus);
        let diag = |d: &[crate::corpus::LineDiagnostic]| {
            d.iter().map(|d| json!({"line": d.line, "message": d.message})).collect::<Vec<_>>()
        };
        let in_window = corpus.in_period().count();
        let doc = json!({
            "accepted": report.is_accepted(),
            "tweets": corpus.tweets.len(),
            "tweets_in_window": in_window,
            "users": corpus.users.len(),
            "fatal_findings": report.fatal_count(),
            "tweet_diagnostics": diag(&tweets.diagnostics),
            "user_diagnostics": diag(&users.diagnostics),
            "findings": report.findings,
        });
        let mut text = serde_json::to_string_pretty(&doc).at(stage)?;
        text.push('\n');
        self.write(stage, "validation.json", text.as_bytes())?;
        if !report.is_accepted() {
            return Err(err(format!("{} fatal validation finding(s); see validation.json", report.fatal_count())));
        }
        Ok(corpus)
    }

    pub fn classify(&self, corpus: &Corpus) -> Result<Labels, StageError> {
        let stage = Stage::Classify;
        let err = |m: String| stage_error(stage, m);
        let references = match &self.config.references {
            Some(path) => {
                let f = File::open(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
                parse_references(BufReader::new(f)).at(stage)?
            }
            None => Vec::new(),
        };
        let labels = classify_corpus(corpus, &references, self.config.thresholds).at(stage)?;
        // Stage inputs for later stages stay CSV whatever the table format.
        self.write(stage, "labels.csv", labels.labels_table().to_csv().as_bytes())?;
        self.write(stage, "accounts.csv", labels.accounts_table().to_csv().as_bytes())?;
        Ok(labels)
    }

    pub fn load_labels(&self, stage: Stage) -> Result<Labels, StageError> {
        let labels = self.open(stage, "labels.csv", Stage::Classify)?;
        let accounts = self.open(stage, "accounts.csv", Stage::Classify)?;
        Labels::read_csv(labels, accounts).at(stage)
    }

    pub fn build_networks(&self, stage: Stage, corpus: &Corpus) -> Result<Vec<CommNetwork>, StageError> {
        let mut by_period: Vec<Vec<&crate::corpus::Tweet>> = vec![Vec::new(); corpus.periods.len()];
        for (p, t) in corpus.in_period() {
            by_period[p].push(t);
        }
        corpus
            .periods
            .periods()
            .iter()
            .zip(&by_period)
            .map(|(period, tweets)| build_network(tweets.iter().copied(), period).at(stage))
            .collect()
    }

    /// Builds and exports one network per period.
    pub fn graph(&self, corpus: &Corpus, labels: &Labels) -> Result<Vec<CommNetwork>, StageError> {
        let stage = Stage::Graph;
        let networks = self.build_networks(stage, corpus)?;
        let ext = self.config.export_format.extension();
        for (p, net) in networks.iter().enumerate() {
            let tweets = corpus.in_period().filter(|(q, _)| *q == p).map(|(_, t)| t);
            let attrs = node_attributes(tweets, |id| labels.is_bot(id));
            let bytes = export_network(net, &attrs, self.config.export_format);
            let slug = crate::design::term_slug(&net.period);
            self.write(stage, &format!("network_{slug}.{ext}"), &bytes)?;
        }
        Ok(networks)
    }

    pub fn metrics(
        &self,
        corpus: &Corpus,
        networks: &[CommNetwork],
        labels: &Labels,
    ) -> Result<Vec<MetricRecord>, StageError> {
        let stage = Stage::Metrics;
        let records = compute_metrics(corpus, networks, labels).at(stage)?;
        self.write(stage, "metrics.csv", metrics_table(&records).to_csv().as_bytes())?;
        Ok(records)
    }

    pub fn load_metrics(&self, stage: Stage) -> Result<Vec<MetricRecord>, StageError> {
        let f = self.open(stage, "metrics.csv", Stage::Metrics)?;
        read_metrics_csv(BufReader::new(f)).at(stage)
    }

    /// Fits the selected Tweedie models on misinformation tweets and writes
    /// the fit tables, `models`, `vif` and `effects`.
    pub fn regress(&self, records: &[MetricRecord], selection: FitSelection) -> Result<(), StageError> {
        let stage = Stage::Regress;
        let err = |m: String| stage_error(stage, m);
        let misinfo: Vec<MetricRecord> = records.iter().filter(|r| r.is_misinfo).cloned().collect();
        let models: Vec<ModelKind> =
            self.config.models.iter().copied().filter(|m| selection.model.is_none_or(|s| s == *m)).collect();
        let dvs: Vec<Dv> = self.config.dvs.iter().copied().filter(|d| selection.dv.is_none_or(|s| s == *d)).collect();
        if models.is_empty() || dvs.is_empty() {
            return Err(err("selection matches no configured model and dependent variable".into()));
        }
        let reference = format!(
            "period={}; misinfo_type={}; is_bot=0; is_retweet=0",
            self.config.periods.periods()[0].label,
            REFERENCE_TYPE
        );
        let mut model_rows = Table::new([
            "dv",
            "model",
            "n",
            "columns",
            "dispersion",
            "deviance",
            "iterations",
            "converged",
            "reference_levels",
            "warnings",
        ]);
        let mut effects =
            Table::new(["dv", "model", "term", "estimate", "effect_percent", "p_value", "stars"]);
        let mut vif_rows = Table::new(["model", "term", "vif", "exceeds_threshold", "warning"]);
        let jobs: Vec<(ModelKind, Dv)> = models.iter().flat_map(|&m| dvs.iter().map(move |&d| (m, d))).collect();
        let fits: Vec<(ModelKind, Dv, DesignMatrix, FitResult)> = jobs
            .par_iter()
            .map(|&(model, dv)| {
                let spec = ModelSpec { kind: model, dv, standardize_age: self.config.standardize_age };
                let dm = build_design_matrix(&misinfo, &self.config.periods, &spec)
                    .map_err(|e| err(format!("{dv}/{model}: {e}")))?;
                let fit = fit_tweedie_glm(&dm.values, &dm.response, &TweedieSpec::default()).map_err(|e| {
                    let detail = match &e {
                        TweedieError::RankDeficient { columns } => format!(
                            "{e} ({})",
                            columns.iter().map(|&c| dm.columns[c].as_str()).collect::<Vec<_>>().join(", ")
                        ),
                        _ => e.to_string(),
                    };
                    err(format!("{dv}/{model}: {detail}"))
                })?;
                Ok((model, dv, dm, fit))
            })
            .collect::<Result<_, StageError>>()?;
        let mut vif_done: Vec<ModelKind> = Vec::new();
        for (model, dv, dm, fit) in &fits {
            let (model, dv) = (*model, *dv);
            // The design, and so the VIF, does not depend on the response.
            if !vif_done.contains(&model) {
                vif_done.push(model);
                for v in vif(dm).at(stage)? {
                    vif_rows.push(vec![
                        model.as_str().into(),
                        v.term.into(),
                        v.vif.into(),
                        (v.vif >= VIF_THRESHOLD).into(),
                        v.warning.into(),
                    ]);
                }
            }
            let rows = wald_table(fit, &dm.columns).map_err(|e| err(format!("{dv}/{model}: {e}")))?;
            self.write_table(stage, &format!("fit_{dv}_{model}"), &wald_rows_table(&rows))?;
            for r in rows.iter().skip(1) {
                effects.push(vec![
                    dv.as_str().into(),
                    model.as_str().into(),
                    r.term.as_str().into(),
                    r.estimate.into(),
                    effect_percent(r.estimate).into(),
                    r.p_value.into(),
                    Cell::Text(r.stars.to_string()),
                ]);
            }
            model_rows.push(vec![
                dv.as_str().into(),
                model.as_str().into(),
                dm.values.nrows().into(),
                dm.values.ncols().into(),
                fit.dispersion.into(),
                fit.deviance.into(),
                fit.iterations.into(),
                fit.converged.into(),
                reference.as_str().into(),
                dm.warnings.join("; ").into(),
            ]);
        }
        self.write_table(stage, "models", &model_rows)?;
        self.write_table(stage, "effects", &effects)?;
        self.write_table(stage, "vif", &vif_rows)?;
        Ok(())
    }

    /// Descriptive statistics, group means, contrasts and the summary chart.
    pub fn report(&self, corpus: &Corpus, labels: &Labels, records: &[MetricRecord]) -> Result<(), StageError> {
        let stage = Stage::Report;
        self.write_table(stage, "descriptives", &descriptives_table(&descriptive_stats(corpus, labels)))?;
        let summary = summarize_groups(records, &self.config.periods);
        self.write_table(stage, "summary", &summary.table())?;
        self.write_table(stage, "contrasts", &summary.contrasts_table())?;
        self.write(stage, "summary.svg", summary.to_svg().as_bytes())
    }

    /// The full pipeline over fresh outputs.
    pub fn run(&self) -> Result<(), StageError> {
        self.clear_artifacts().at(Stage::Ingest)?;
        let corpus = self.ingest()?;
        let labels = self.classify(&corpus)?;
        let networks = self.graph(&corpus, &labels)?;
        self.metrics(&corpus, &networks, &labels)?;
        // Later stages see metrics exactly as written, so `run` and the
        // individual stage commands produce the same artifacts.
        let records = self.load_metrics(Stage::Regress)?;
        self.regress(&records, FitSelection::default())?;
        self.report(&corpus, &labels, &records)
    }

    /// Generates a synthetic corpus into the output directory together with
    /// a `run.conf` that analyses it.
    pub fn synth(&self) -> Result<(), StageError> {
        let stage = Stage::Synth;
        let generated = generate_corpus(&self.config.synth).at(stage)?;
        write_corpus_files(&generated, &self.out_dir).at(stage)?;
        let conf = RunConfig::corpus_config_text(&self.config.periods, !generated.references.is_empty());
        self.write(stage, "run.conf", conf.as_bytes())
    }

    fn clear_artifacts(&self) -> std::io::Result<()> {
        let Ok(entries) = std::fs::read_dir(&self.out_dir) else {
            return Ok(());
        };
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_file() && is_artifact_name(&name) {
                std::fs::remove_file(entry.path())?;
            }
        }
        Ok(())
    }

    /// Hashes every file in the output directory and writes the manifest.
    pub fn write_manifest(&self, failure: Option<&StageError>) -> std::io::Result<Vec<ManifestEntry>> {
        std::fs::create_dir_all(&self.out_dir)?;
        let entries = manifest_entries(&self.out_dir)?;
        let files: Vec<_> =
            entries.iter().map(|e| json!({"path": e.path, "sha256": e.sha256, "bytes": e.bytes})).collect();
        let doc = match failure {
            None => json!({"status": "ok", "artifacts": files}),
            Some(f) => json!({
                "status": "FAILED",
                "failed_stage": f.stage.as_str(),
                "exit_code": f.stage.exit_code(),
                "error": f.message,
                "artifacts": files,
            }),
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(self.out_dir.join(MANIFEST), text)?;
        Ok(entries)
    }
}

/// File names written by the analysis stages.
pub fn is_artifact_name(name: &str) -> bool {
    let stem_ext = name.rsplit_once('.');
    let Some((stem, ext)) = stem_ext else { return false };
    match ext {
        "json" if matches!(stem, "validation" | "manifest") => true,
        "csv" if matches!(stem, "labels" | "accounts" | "metrics") => true,
        "csv" | "json" => {
            matches!(stem, "models" | "effects" | "vif" | "descriptives" | "summary" | "contrasts")
                || stem.starts_with("fit_")
        }
        "svg" => stem == "summary",
        "gexf" | "dot" => stem.starts_with("network_"),
        _ => false,
    }
}

/// Sorted `(path, sha256, bytes)` for every regular file directly in `dir`
/// except the manifest itself.
pub fn manifest_entries(dir: &Path) -> std::io::Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST || !entry.file_type()?.is_file() {
            continue;
        }
        let bytes = std::fs::read(entry.path())?;
        out.push(ManifestEntry { path: name, sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
