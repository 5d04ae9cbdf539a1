//! Tweet and account ingestion, period partitioning and corpus validation.
//!
//! Tweets arrive as line-delimited JSON, accounts as a CSV table. Parsing is
//! lenient per record: malformed lines are reported with their line number and
//! skipped, while stream-level failures abort.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{MisinfoLabel, MisinfoType};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("users table header must be `user_id,created_at,bot_probability`, found `{0}`")]
    UsersHeader(String),
    #[error("duplicate user id `{0}`")]
    DuplicateUser(String),
    #[error("invalid period configuration: {0}")]
    InvalidPeriods(String),
}

/// One post record.
#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    pub tweet_id: String,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    pub is_retweet: bool,
    pub retweeted_author_id: Option<String>,
    pub mentioned_author_ids: Vec<String>,
    pub retweet_count: u64,
    pub embedding: Option<Vec<f64>>,
    pub misinfo_label: Option<MisinfoLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    pub created_at: NaiveDate,
    pub bot_probability: f64,
}

/// A named, inclusive range of UTC calendar dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Ordered, non-overlapping analysis periods. The first period is the
/// regression reference level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodConfig {
    periods: Vec<Period>,
}

impl PeriodConfig {
    pub fn new(periods: Vec<Period>) -> Result<Self, CorpusError> {
        if periods.is_empty() {
            return Err(CorpusError::InvalidPeriods("at least one period is required".into()));
        }
        let mut labels = HashSet::new();
        for p in &periods {
            if p.start > p.end {
                return Err(CorpusError::InvalidPeriods(format!(
                    "period `{}` starts after it ends",
                    p.label
                )));
            }
            if !labels.insert(p.label.as_str()) {
                return Err(CorpusError::InvalidPeriods(format!(
                    "duplicate period label `{}`",
                    p.label
                )));
            }
        }
        let mut by_start: Vec<&Period> = periods.iter().collect();
        by_start.sort_by_key(|p| p.start);
        for pair in by_start.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(CorpusError::InvalidPeriods(format!(
                    "periods `{}` and `{}` overlap",
                    pair[0].label, pair[1].label
                )));
            }
        }
        Ok(Self { periods })
    }

    /// Pre-Vaccine, Vaccine Launch and Post-Vaccine windows of the COVID-19
    /// vaccine rollout discourse.
    pub fn covid_vaccine() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        Self::new(vec![
            Period { label: "Pre-Vaccine".into(), start: d(2020, 12, 1), end: d(2020, 12, 7) },
            Period { label: "Vaccine Launch".into(), start: d(2020, 12, 8), end: d(2020, 12, 10) },
            Period { label: "Post-Vaccine".into(), start: d(2021, 1, 25), end: d(2021, 1, 31) },
        ])
        .expect("default periods are valid")
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Period> {
        self.periods.iter().find(|p| p.label == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.periods.iter().position(|p| p.label == label)
    }

    /// Index of the period containing the timestamp's UTC date.
    pub fn period_index(&self, created_at: &DateTime<Utc>) -> Option<usize> {
        let date = created_at.date_naive();
        self.periods.iter().position(|p| p.start <= date && date <= p.end)
    }
}

/// Label of the unique period whose inclusive date range contains the
/// timestamp, or `None` if it falls outside every window.
pub fn assign_period<'a>(created_at: &DateTime<Utc>, periods: &'a PeriodConfig) -> Option<&'a str> {
    periods
        .period_index(created_at)
        .map(|i| periods.periods[i].label.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTweets {
    pub tweets: Vec<Tweet>,
    pub diagnostics: Vec<LineDiagnostic>,
}

#[derive(Debug, Clone, Default)]
pub struct TweetParseOptions {
    /// When set, records whose embedding has another dimension are rejected.
    pub embedding_dim: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TweetLine {
    id: String,
    author_id: String,
    created_at: DateTime<Utc>,
    is_retweet: bool,
    #[serde(default)]
    retweeted_author_id: Option<String>,
    #[serde(default)]
    mentions: Vec<String>,
    retweet_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    misinfo: Option<MisinfoLine>,
}

#[derive(Serialize, Deserialize)]
struct MisinfoLine {
    is_misinfo: bool,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    misinfo_type: Option<MisinfoType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_id: Option<String>,
}

impl TweetLine {
    fn into_tweet(self) -> Result<Tweet, String> {
        if self.is_retweet && self.retweeted_author_id.is_none() {
            return Err("retweet missing source".into());
        }
        if !self.is_retweet && self.retweeted_author_id.is_some() {
            return Err("retweeted_author_id set on a non-retweet".into());
        }
        if let Some(e) = &self.embedding {
            if e.is_empty() {
                return Err("empty embedding".into());
            }
        }
        let misinfo_label = match self.misinfo {
            None => None,
            Some(m) => {
                if m.is_misinfo && m.misinfo_type.is_none() {
                    return Err("misinfo label without type".into());
                }
                if let Some(s) = m.similarity {
                    if !(-1.0..=1.0).contains(&s) {
                        return Err(format!("similarity {s} outside [-1, 1]"));
                    }
                }
                Some(MisinfoLabel {
                    is_misinfo: m.is_misinfo,
                    misinfo_type: if m.is_misinfo { m.misinfo_type } else { None },
                    similarity: m.similarity,
                    matched_reference_id: m.reference_id,
                })
            }
        };
        Ok(Tweet {
            tweet_id: self.id,
            author_id: self.author_id,
            created_at: self.created_at,
            is_retweet: self.is_retweet,
            retweeted_author_id: self.retweeted_author_id,
            mentioned_author_ids: self.mentions,
            retweet_count: self.retweet_count,
            embedding: self.embedding,
            misinfo_label,
        })
    }

    fn from_tweet(t: &Tweet) -> Self {
        Self {
            id: t.tweet_id.clone(),
            author_id: t.author_id.clone(),
            created_at: t.created_at,
            is_retweet: t.is_retweet,
            retweeted_author_id: t.retweeted_author_id.clone(),
            mentions: t.mentioned_author_ids.clone(),
            retweet_count: t.retweet_count,
            embedding: t.embedding.clone(),
            misinfo: t.misinfo_label.as_ref().map(|m| MisinfoLine {
                is_misinfo: m.is_misinfo,
                misinfo_type: m.misinfo_type,
                similarity: m.similarity,
                reference_id: m.matched_reference_id.clone(),
            }),
        }
    }
}

/// Parses `tweets.jsonl`. Blank lines are ignored; a repeated tweet id keeps
/// the first occurrence.
pub fn parse_tweets<R: BufRead>(reader: R, options: &TweetParseOptions) -> Result<ParsedTweets, CorpusError> {
    let mut out = ParsedTweets::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<TweetLine>(&line)
            .map_err(|e| e.to_string())
            .and_then(TweetLine::into_tweet);
        let tweet = match parsed {
            Ok(t) => t,
            Err(message) => {
                out.diagnostics.push(LineDiagnostic { line: lineno, message });
                continue;
            }
        };
        if let (Some(dim), Some(e)) = (options.embedding_dim, &tweet.embedding) {
            if e.len() != dim {
                out.diagnostics.push(LineDiagnostic {
                    line: lineno,
                    message: format!("embedding dimension {} (expected {dim})", e.len()),
                });
                continue;
            }
        }
        if !seen.insert(tweet.tweet_id.clone()) {
            out.diagnostics.push(LineDiagnostic {
                line: lineno,
                message: format!("duplicate tweet id `{}`", tweet.tweet_id),
            });
            continue;
        }
        out.tweets.push(tweet);
    }
    Ok(out)
}

pub fn write_tweets<W: Write>(mut writer: W, tweets: &[Tweet]) -> Result<(), CorpusError> {
    for t in tweets {
        let line = serde_json::to_string(&TweetLine::from_tweet(t)).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct ParsedUsers {
    pub users: BTreeMap<String, UserProfile>,
    pub diagnostics: Vec<LineDiagnostic>,
}

const USERS_HEADER: [&str; 3] = ["user_id", "created_at", "bot_probability"];

/// Parses `users.csv`. Out-of-range probabilities and unparsable fields are
/// per-line diagnostics; a repeated user id is fatal.
pub fn parse_users<R: std::io::Read>(reader: R) -> Result<ParsedUsers, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(USERS_HEADER.iter().copied()) {
        return Err(CorpusError::UsersHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = ParsedUsers::default();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parsed = (|| {
            if record.len() != 3 {
                return Err(format!("expected 3 fields, found {}", record.len()));
            }
            let user_id = record[0].to_string();
            if user_id.is_empty() {
                return Err("empty user_id".to_string());
            }
            let created_at = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d")
                .map_err(|e| format!("bad created_at `{}`: {e}", &record[1]))?;
            let bot_probability: f64 = record[2]
                .parse()
                .map_err(|_| format!("bad bot_probability `{}`", &record[2]))?;
            if !(0.0..=1.0).contains(&bot_probability) {
                return Err(format!("bot_probability {bot_probability} outside [0, 1]"));
            }
            Ok(UserProfile { user_id, created_at, bot_probability })
        })();
        match parsed {
            Ok(u) => {
                if out.users.contains_key(&u.user_id) {
                    return Err(CorpusError::DuplicateUser(u.user_id));
                }
                out.users.insert(u.user_id.clone(), u);
            }
            Err(message) => out.diagnostics.push(LineDiagnostic { line, message }),
        }
    }
    Ok(out)
}

pub fn write_users<'a, W, I>(writer: W, users: I) -> Result<(), CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a UserProfile>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(USERS_HEADER)?;
    for u in users {
        wtr.write_record([
            u.user_id.as_str(),
            &u.created_at.format("%Y-%m-%d").to_string(),
            &u.bot_probability.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub tweets: Vec<Tweet>,
    pub users: BTreeMap<String, UserProfile>,
    pub periods: PeriodConfig,
}

impl Corpus {
    /// Tweets inside some period, paired with that period's index.
    pub fn in_period(&self) -> impl Iterator<Item = (usize, &Tweet)> {
        self.tweets
            .iter()
            .filter_map(|t| self.periods.period_index(&t.created_at).map(|p| (p, t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    UnresolvedAuthor,
    EmbeddingDimension,
    ImpossibleAccount,
    OutOfWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub tweet_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn fatal_count(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == Severity::Fatal).count()
    }

    pub fn is_accepted(&self) -> bool {
        self.fatal_count() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Checks author resolution, period coverage, embedding dimensions and
/// account creation dates. Findings are in input order.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let dim = corpus.tweets.iter().find_map(|t| t.embedding.as_ref().map(Vec::len));
    for t in &corpus.tweets {
        let mut push = |severity, kind, message: String| {
            report.findings.push(Finding { severity, kind, tweet_id: t.tweet_id.clone(), message });
        };
        let user = corpus.users.get(&t.author_id);
        if user.is_none() {
            push(
                Severity::Fatal,
                FindingKind::UnresolvedAuthor,
                format!("author `{}` has no user record", t.author_id),
            );
        }
        if let (Some(d), Some(e)) = (dim, &t.embedding) {
            if e.len() != d {
                push(
                    Severity::Fatal,
                    FindingKind::EmbeddingDimension,
                    format!("embedding dimension {} differs from corpus dimension {d}", e.len()),
                );
            }
        }
        match corpus.periods.period_index(&t.created_at) {
            None => push(
                Severity::Warning,
                FindingKind::OutOfWindow,
                format!("out-of-window: {} is outside every period", t.created_at.date_naive()),
            ),
            Some(p) => {
                let end = corpus.periods.periods()[p].end;
                if let Some(u) = user {
                    if u.created_at > end {
                        push(
                            Severity::Fatal,
                            FindingKind::ImpossibleAccount,
                            format!("account `{}` created {} after period end {end}", u.user_id, u.created_at),
                        );
                    }
                }
            }
        }
    }
    report
}
