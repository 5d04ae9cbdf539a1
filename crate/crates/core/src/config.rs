//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! input.tweets = tweets.jsonl
//! input.users = users.csv
//! input.references = references.jsonl
//! output.dir = out
//! period = Pre-Vaccine, 2020-12-01, 2020-12-07
//! period = Vaccine Launch, 2020-12-08, 2020-12-10
//! classify.misinfo_threshold = 0.70
//! classify.bot_threshold = 0.70
//! export.format = gexf
//! table.format = csv
//! design.standardize_age = false
//! models = baseline, conditional
//! dvs = appeal, scope
//! synth.seed = 42
//! synth.coef.bot = -2.42
//! ```
//!
//! Relative paths resolve against the config file's directory. `period` may
//! repeat; every other key may appear once. Without `period` lines the three
//! COVID-19 vaccine windows apply.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::classify::Thresholds;
use crate::corpus::{Period, PeriodConfig};
use crate::design::{Dv, ModelKind};
use crate::netgraph::ExportFormat;
use crate::synth::SynthConfig;
use crate::table::TableFormat;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tweets: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub periods: PeriodConfig,
    pub thresholds: Thresholds,
    pub export_format: ExportFormat,
    pub table_format: TableFormat,
    pub standardize_age: bool,
    pub models: Vec<ModelKind>,
    pub dvs: Vec<Dv>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tweets: None,
            users: None,
            references: None,
            out_dir: PathBuf::from("out"),
            periods: PeriodConfig::covid_vaccine(),
            thresholds: Thresholds::default(),
            export_format: ExportFormat::Gexf,
            table_format: TableFormat::Csv,
            standardize_age: false,
            models: ModelKind::ALL.to_vec(),
            dvs: Dv::ALL.to_vec(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("bad value `{value}`: {e}"))
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value.split(',').map(|s| parse_value(s.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        o => Err(format!("bad boolean `{o}`")),
    }
}

fn parse_period(value: &str) -> Result<Period, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    let [label, start, end] = parts[..] else {
        return Err(format!("period needs `label, start, end`, found `{value}`"));
    };
    let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"));
    Ok(Period { label: label.to_string(), start: date(start)?, end: date(end)? })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig { out_dir: base.join("out"), ..RunConfig::default() };
        let mut periods: Vec<Period> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut synth_mix: Option<Vec<f64>> = None;
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |message: String| ConfigError::Line { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| fail(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key != "period" && !seen.insert(key.to_string()) {
                return Err(fail(format!("duplicate key `{key}`")));
            }
            let s = &mut cfg.synth;
            let r: Result<(), String> = match key {
                "input.tweets" => Ok(cfg.tweets = Some(resolve(value))),
                "input.users" => Ok(cfg.users = Some(resolve(value))),
                "input.references" => Ok(cfg.references = Some(resolve(value))),
                "output.dir" => Ok(cfg.out_dir = resolve(value)),
                "period" => parse_period(value).map(|p| periods.push(p)),
                "classify.misinfo_threshold" => parse_value(value).map(|v| cfg.thresholds.misinfo = v),
                "classify.bot_threshold" => parse_value(value).map(|v| cfg.thresholds.bot = v),
                "export.format" => parse_value(value).map(|v| cfg.export_format = v),
                "table.format" => parse_value(value).map(|v| cfg.table_format = v),
                "design.standardize_age" => parse_bool(value).map(|v| cfg.standardize_age = v),
                "models" => parse_list(value).map(|v| cfg.models = v),
                "dvs" => parse_list(value).map(|v| cfg.dvs = v),
                "synth.seed" => parse_value(value).map(|v| s.seed = v),
                "synth.n_users" => parse_value(value).map(|v| s.n_users = v),
                "synth.n_tweets" => parse_value(value).map(|v| s.n_tweets = v),
                "synth.bot_fraction" => parse_value(value).map(|v| s.bot_fraction = v),
                "synth.dispersion" => parse_value(value).map(|v| s.dispersion = v),
                "synth.power" => parse_value(value).map(|v| s.power = v),
                "synth.period_mix" => parse_list(value).map(|v| synth_mix = Some(v)),
                "synth.misinfo_fraction" => parse_value(value).map(|v| s.misinfo_fraction = v),
                "synth.retweet_fraction" => parse_value(value).map(|v| s.retweet_fraction = v),
                "synth.mention_rate" => parse_value(value).map(|v| s.mention_rate = v),
                "synth.embedding_dim" => parse_value(value).map(|v| s.embedding_dim = v),
                k if k.starts_with("synth.coef.") => {
                    parse_value(value).map(|v| {
                        s.coefficients.insert(k["synth.coef.".len()..].to_string(), v);
                    })
                }
                k => Err(format!("unknown key `{k}`")),
            };
            r.map_err(fail)?;
        }
        if !periods.is_empty() {
            cfg.periods = PeriodConfig::new(periods).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        cfg.synth.periods = cfg.periods.clone();
        match synth_mix {
            Some(mix) => cfg.synth.period_mix = mix,
            None if cfg.periods.len() != cfg.synth.period_mix.len() => {
                cfg.synth.period_mix = vec![1.0 / cfg.periods.len() as f64; cfg.periods.len()];
            }
            None => {}
        }
        for t in [cfg.thresholds.misinfo, cfg.thresholds.bot] {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(cfg)
    }

    /// Config text for a corpus directory holding the standard file names.
    pub fn corpus_config_text(periods: &PeriodConfig, with_references: bool) -> String {
        let mut out = String::from("input.tweets = tweets.jsonl\ninput.users = users.csv\n");
        if with_references {
            out.push_str("input.references = references.jsonl\n");
        }
        out.push_str("output.dir = out\n");
        for p in periods.periods() {
            out.push_str(&format!("period = {}, {}, {}\n", p.label, p.start, p.end));
        }
        out
    }
}
