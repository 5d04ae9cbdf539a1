//! Misinformation labels from embedding similarity and bot flags from
//! precomputed bot probabilities.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::table::{Cell, Table};

pub const DEFAULT_MISINFO_THRESHOLD: f64 = 0.70;
pub const DEFAULT_BOT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-length or all-zero vector")]
    ZeroVector,
    #[error("no reference tweets supplied")]
    NoReferences,
    #[error("bot probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("account created {created} after period end {period_end}")]
    ImpossibleAccount { created: NaiveDate, period_end: NaiveDate },
    #[error("tweet `{0}` has neither a precomputed label nor an embedding")]
    Unlabelable(String),
    #[error("references line {line}: {message}")]
    BadReference { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Annotated misinformation categories. Declaration order is the canonical
/// column order; `Conspiracy` is the regression reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisinfoType {
    FakeCure,
    Conspiracy,
    FakeTreatment,
    FalseFactOrPrevention,
    FalsePublicHealthResponse,
}

impl MisinfoType {
    pub const ALL: [MisinfoType; 5] = [
        MisinfoType::FakeCure,
        MisinfoType::Conspiracy,
        MisinfoType::FakeTreatment,
        MisinfoType::FalseFactOrPrevention,
        MisinfoType::FalsePublicHealthResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MisinfoType::FakeCure => "fake_cure",
            MisinfoType::Conspiracy => "conspiracy",
            MisinfoType::FakeTreatment => "fake_treatment",
            MisinfoType::FalseFactOrPrevention => "false_fact_or_prevention",
            MisinfoType::FalsePublicHealthResponse => "false_public_health_response",
        }
    }
}

impl fmt::Display for MisinfoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MisinfoType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MisinfoType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown misinformation type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MisinfoLabel {
    pub is_misinfo: bool,
    pub misinfo_type: Option<MisinfoType>,
    pub similarity: Option<f64>,
    pub matched_reference_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTweet {
    pub reference_id: String,
    pub misinfo_type: MisinfoType,
    pub embedding: Vec<f64>,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, ClassifyError> {
    if a.len() != b.len() {
        return Err(ClassifyError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(ClassifyError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Nearest-reference labelling: misinformation iff the best cosine similarity
/// is at least `threshold`. Ties on the best similarity go to the smallest
/// reference id.
pub fn label_misinformation(
    embedding: &[f64],
    references: &[ReferenceTweet],
    threshold: f64,
) -> Result<MisinfoLabel, ClassifyError> {
    let mut best: Option<(f64, &ReferenceTweet)> = None;
    for r in references {
        let s = cosine_similarity(embedding, &r.embedding)?;
        best = match best {
            Some((bs, br)) if bs > s || (bs == s && br.reference_id <= r.reference_id) => Some((bs, br)),
            _ => Some((s, r)),
        };
    }
    let (sim, reference) = best.ok_or(ClassifyError::NoReferences)?;
    if sim >= threshold {
        Ok(MisinfoLabel {
            is_misinfo: true,
            misinfo_type: Some(reference.misinfo_type),
            similarity: Some(sim),
            matched_reference_id: Some(reference.reference_id.clone()),
        })
    } else {
        Ok(MisinfoLabel::default())
    }
}

/// Bot iff the probability is strictly above the threshold.
pub fn label_bot(bot_probability: f64, threshold: f64) -> Result<bool, ClassifyError> {
    if !(0.0..=1.0).contains(&bot_probability) {
        return Err(ClassifyError::ProbabilityOutOfRange(bot_probability));
    }
    Ok(bot_probability > threshold)
}

/// Whole days from account creation to the last date of the tweet's period.
pub fn account_age(created_at: NaiveDate, period_end: NaiveDate) -> Result<u32, ClassifyError> {
    let days = (period_end - created_at).num_days();
    if days < 0 {
        return Err(ClassifyError::ImpossibleAccount { created: created_at, period_end });
    }
    Ok(days as u32)
}

#[derive(Serialize, Deserialize)]
struct ReferenceLine {
    reference_id: String,
    #[serde(rename = "type")]
    misinfo_type: MisinfoType,
    embedding: Vec<f64>,
}

pub fn write_references<W: std::io::Write>(mut writer: W, references: &[ReferenceTweet]) -> std::io::Result<()> {
    for r in references {
        let line = ReferenceLine {
            reference_id: r.reference_id.clone(),
            misinfo_type: r.misinfo_type,
            embedding: r.embedding.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses `references.jsonl`. Unlike tweets, any malformed reference is fatal.
pub fn parse_references<R: BufRead>(reader: R) -> Result<Vec<ReferenceTweet>, ClassifyError> {
    let mut out: Vec<ReferenceTweet> = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ClassifyError::Io(e.to_string()))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ClassifyError::BadReference { line: lineno, message };
        let r: ReferenceLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if r.embedding.iter().all(|x| *x == 0.0) {
            return Err(bad("zero embedding".into()));
        }
        if let Some(first) = out.first() {
            if first.embedding.len() != r.embedding.len() {
                return Err(bad(format!(
                    "embedding dimension {} differs from {}",
                    r.embedding.len(),
                    first.embedding.len()
                )));
            }
        }
        if !ids.insert(r.reference_id.clone()) {
            return Err(bad(format!("duplicate reference id `{}`", r.reference_id)));
        }
        out.push(ReferenceTweet { reference_id: r.reference_id, misinfo_type: r.misinfo_type, embedding: r.embedding });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub misinfo: f64,
    pub bot: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { misinfo: DEFAULT_MISINFO_THRESHOLD, bot: DEFAULT_BOT_THRESHOLD }
    }
}

/// Per-tweet misinformation labels and per-account bot flags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub misinfo: BTreeMap<String, MisinfoLabel>,
    pub bots: BTreeMap<String, bool>,
    pub bot_probabilities: BTreeMap<String, f64>,
}

impl Labels {
    pub fn is_bot(&self, user_id: &str) -> bool {
        self.bots.get(user_id).copied().unwrap_or(false)
    }

    pub fn is_misinfo(&self, tweet_id: &str) -> bool {
        self.misinfo.get(tweet_id).is_some_and(|l| l.is_misinfo)
    }

    pub fn labels_table(&self) -> Table {
        let mut t = Table::new(["tweet_id", "is_misinfo", "misinfo_type", "similarity", "matched_reference_id"]);
        for (id, l) in &self.misinfo {
            t.push(vec![
                id.as_str().into(),
                l.is_misinfo.into(),
                l.misinfo_type.map(|m| m.as_str()).into(),
                l.similarity.map_or(Cell::Empty, Cell::Exact),
                l.matched_reference_id.clone().into(),
            ]);
        }
        t
    }

    pub fn accounts_table(&self) -> Table {
        let mut t = Table::new(["user_id", "bot_probability", "is_bot"]);
        for (id, is_bot) in &self.bots {
            t.push(vec![
                id.as_str().into(),
                self.bot_probabilities.get(id).map_or(Cell::Empty, |p| Cell::Exact(*p)),
                (*is_bot).into(),
            ]);
        }
        t
    }

    /// Reads back the `labels.csv` / `accounts.csv` pair written by
    /// [`Labels::labels_table`] and [`Labels::accounts_table`].
    pub fn read_csv<R1: std::io::Read, R2: std::io::Read>(labels: R1, accounts: R2) -> Result<Self, String> {
        let mut out = Labels::default();
        let mut rdr = csv::Reader::from_reader(labels);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != 5 {
                return Err(format!("labels row has {} fields", rec.len()));
            }
            let label = MisinfoLabel {
                is_misinfo: parse_flag(&rec[1])?,
                misinfo_type: opt(&rec[2]).map(str::parse).transpose()?,
                similarity: opt(&rec[3]).map(|s| s.parse::<f64>().map_err(|e| e.to_string())).transpose()?,
                matched_reference_id: opt(&rec[4]).map(str::to_string),
            };
            out.misinfo.insert(rec[0].to_string(), label);
        }
        let mut rdr = csv::Reader::from_reader(accounts);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != 3 {
                return Err(format!("accounts row has {} fields", rec.len()));
            }
            if let Some(p) = opt(&rec[1]) {
                out.bot_probabilities.insert(rec[0].to_string(), p.parse::<f64>().map_err(|e| e.to_string())?);
            }
            out.bots.insert(rec[0].to_string(), parse_flag(&rec[2])?);
        }
        Ok(out)
    }
}

fn opt(s: &str) -> Option<&str> {
    (!s.is_empty()).then_some(s)
}

fn parse_flag(s: &str) -> Result<bool, String> {
    match s {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(format!("bad flag `{other}`")),
    }
}

/// Labels every tweet and account in the corpus. A precomputed label on the
/// tweet takes precedence over embedding similarity.
pub fn classify_corpus(
    corpus: &Corpus,
    references: &[ReferenceTweet],
    thresholds: Thresholds,
) -> Result<Labels, ClassifyError> {
    let misinfo: Vec<(String, MisinfoLabel)> = corpus
        .tweets
        .par_iter()
        .map(|t| {
            let label = match (&t.misinfo_label, &t.embedding) {
                (Some(l), _) => l.clone(),
                (None, Some(e)) if !references.is_empty() => label_misinformation(e, references, thresholds.misinfo)?,
                _ => return Err(ClassifyError::Unlabelable(t.tweet_id.clone())),
            };
            Ok((t.tweet_id.clone(), label))
        })
        .collect::<Result<_, _>>()?;
    let mut bots = BTreeMap::new();
    let mut bot_probabilities = BTreeMap::new();
    for (id, u) in &corpus.users {
        bots.insert(id.clone(), label_bot(u.bot_probability, thresholds.bot)?);
        bot_probabilities.insert(id.clone(), u.bot_probability);
    }
    Ok(Labels { misinfo: misinfo.into_iter().collect(), bots, bot_probabilities })
}
