//! Seeded synthetic corpora with planted Tweedie effects.
//!
//! Every random draw comes from a ChaCha8 generator seeded with the config
//! seed and switched to a per-entity stream:
//!
//! ```text
//! stream = (domain << 56) | index      domain: 1 users, 2 tweets, 3 references
//! ```
//!
//! so entity `index` sees the same draws regardless of thread count,
//! platform, or how many other entities are generated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classify::{label_misinformation, write_references, Labels, MisinfoLabel, MisinfoType, ReferenceTweet};
use crate::corpus::{write_tweets, write_users, Corpus, CorpusError, PeriodConfig, Tweet, UserProfile};
use crate::design::{design_columns, term_slug, ModelKind};

const STREAM_USERS: u64 = 1;
const STREAM_TWEETS: u64 = 2;
const STREAM_REFERENCES: u64 = 3;

/// Minimum rows per design column.
pub const ROWS_PER_COLUMN: usize = 50;

/// Bot probabilities are kept this far from the bot threshold, and
/// embedding similarities this far from the misinformation threshold, so
/// classification reproduces the planted truth exactly.
const LABEL_MARGIN: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sampler domain error: {0}")]
    Domain(String),
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One compound Poisson–Gamma draw: `N ~ Poisson(μ^(2−p) / ((2−p)φ))`
/// Gamma variates of shape `(2−p)/(p−1)` and scale `φ(p−1)μ^(p−1)`, summed.
pub fn sample_tweedie<R: Rng + ?Sized>(mu: f64, p: f64, phi: f64, rng: &mut R) -> Result<f64, SynthError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SynthError::Domain(format!("mean {mu} must be positive and finite")));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(SynthError::Domain(format!("power {p} must lie in (1, 2)")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(SynthError::Domain(format!("dispersion {phi} must be positive")));
    }
    let lambda = mu.powf(2.0 - p) / ((2.0 - p) * phi);
    let count = Poisson::new(lambda).map_err(|e| SynthError::Domain(e.to_string()))?.sample(rng) as u64;
    if count == 0 {
        return Ok(0.0);
    }
    let gamma = Gamma::new((2.0 - p) / (p - 1.0), phi * (p - 1.0) * mu.powf(p - 1.0))
        .map_err(|e| SynthError::Domain(e.to_string()))?;
    Ok((0..count).map(|_| gamma.sample(rng)).sum())
}

/// Generator for entity `index` of a stream domain.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_tweets: usize,
    pub bot_fraction: f64,
    /// Planted log-scale coefficients keyed by design column name; missing
    /// terms are zero.
    pub coefficients: BTreeMap<String, f64>,
    pub dispersion: f64,
    pub power: f64,
    pub periods: PeriodConfig,
    /// Share of tweets per period, in period order.
    pub period_mix: Vec<f64>,
    pub misinfo_fraction: f64,
    pub retweet_fraction: f64,
    /// Expected mentions per tweet.
    pub mention_rate: f64,
    /// Embedding dimension; 0 writes precomputed labels instead.
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let coefficients = [
            ("intercept", 3.0),
            ("bot", -2.42),
            ("vaccine_launch", 0.067),
            ("post_vaccine", 0.0438),
            ("fake_cure", 0.15),
            ("fake_treatment", -0.1),
            ("false_fact_or_prevention", 0.05),
            ("false_public_health_response", -0.05),
            ("is_retweet", 0.2),
            ("account_age_days", 1e-4),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            seed: 42,
            n_users: 500,
            n_tweets: 5000,
            bot_fraction: 0.25,
            coefficients,
            dispersion: 1.0,
            power: 1.5,
            periods: PeriodConfig::covid_vaccine(),
            period_mix: vec![0.267, 0.411, 0.322],
            misinfo_fraction: 0.6,
            retweet_fraction: 0.3,
            mention_rate: 0.8,
            embedding_dim: 16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        let columns = design_columns(&self.periods, ModelKind::Conditional);
        if self.n_tweets < columns.len() * ROWS_PER_COLUMN {
            return err(format!(
                "n_tweets {} below {} ({} design columns × {ROWS_PER_COLUMN})",
                self.n_tweets,
                columns.len() * ROWS_PER_COLUMN,
                columns.len()
            ));
        }
        if self.n_users < 2 {
            return err("need at least two users".into());
        }
        for (name, v) in [
            ("bot_fraction", self.bot_fraction),
            ("misinfo_fraction", self.misinfo_fraction),
            ("retweet_fraction", self.retweet_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.mention_rate >= 0.0 && self.mention_rate.is_finite()) {
            return err(format!("mention_rate {} must be non-negative", self.mention_rate));
        }
        if !(self.power > 1.0 && self.power < 2.0) {
            return err(format!("power {} must lie in (1, 2)", self.power));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return err(format!("dispersion {} must be positive", self.dispersion));
        }
        if self.period_mix.len() != self.periods.len() {
            return err(format!(
                "period mix has {} entries for {} periods",
                self.period_mix.len(),
                self.periods.len()
            ));
        }
        if self.period_mix.iter().any(|w| !(*w >= 0.0)) {
            return err("period mix entries must be non-negative".into());
        }
        let total: f64 = self.period_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return err(format!("period mix sums to {total}, not 1"));
        }
        for (name, v) in &self.coefficients {
            if !columns.contains(name) {
                return err(format!("unknown coefficient `{name}`"));
            }
            if !v.is_finite() {
                return err(format!("coefficient `{name}` is not finite"));
            }
        }
        let planted = |name: &str| self.coefficients.get(name).is_some_and(|v| *v != 0.0);
        if self.misinfo_fraction == 0.0 {
            if let Some(t) = MisinfoType::ALL.iter().find(|t| planted(t.as_str())) {
                return err(format!("misinfo_fraction is 0 but an effect is planted on `{t}`"));
            }
        }
        for (p, w) in self.periods.periods().iter().zip(&self.period_mix).skip(1) {
            let slug = term_slug(&p.label);
            if *w == 0.0 && (planted(&slug) || planted(&format!("bot_x_{slug}"))) {
                return err(format!("period `{}` has zero share but a planted effect", p.label));
            }
        }
        if self.embedding_dim != 0 && self.embedding_dim < MisinfoType::ALL.len() {
            return err(format!(
                "embedding_dim {} must be 0 or at least {}",
                self.embedding_dim,
                MisinfoType::ALL.len()
            ));
        }
        Ok(())
    }

    fn coefficient(&self, name: &str) -> f64 {
        self.coefficients.get(name).copied().unwrap_or(0.0)
    }

    pub fn n_bots(&self) -> usize {
        (self.bot_fraction * self.n_users as f64).round() as usize
    }
}

/// Planted parameters and realised counts, written as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub power: f64,
    pub dispersion: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub response: String,
    pub n_users: usize,
    pub n_bots: usize,
    pub n_tweets: usize,
    pub n_misinfo: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub references: Vec<ReferenceTweet>,
    /// Labels as planted; classification of the corpus reproduces them.
    pub labels: Labels,
    pub truth: GroundTruth,
}

fn id_width(n: usize) -> usize {
    n.max(1).to_string().len()
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("valid normal");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// One reference per misinformation type, mutually orthonormal.
fn make_references(seed: u64, dim: usize) -> Vec<ReferenceTweet> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..MisinfoType::ALL.len() {
        let mut rng = stream_rng(seed, STREAM_REFERENCES, k as u64);
        let v = loop {
            let mut v = gaussian_vector(&mut rng, dim, 1.0);
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        basis.push(v);
    }
    MisinfoType::ALL
        .iter()
        .zip(basis)
        .map(|(ty, v)| ReferenceTweet {
            reference_id: format!("ref-{}", ty.as_str()),
            misinfo_type: *ty,
            embedding: v.into_iter().map(|x| round_to(x, 6)).collect(),
        })
        .collect()
}

fn pick_other(rng: &mut ChaCha8Rng, n: usize, not: usize) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= not {
        j + 1
    } else {
        j
    }
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let n_bots = config.n_bots();
    let uw = id_width(config.n_users);
    let tw = id_width(config.n_tweets);
    let user_id = |j: usize| format!("u{j:0uw$}");
    let first_start = config.periods.periods()[0].start;
    let earliest = NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date");
    let account_span = (first_start - earliest).num_days().max(1);

    let users: Vec<UserProfile> = (0..config.n_users)
        .map(|j| {
            let mut rng = stream_rng(config.seed, STREAM_USERS, j as u64);
            let is_bot = j < n_bots;
            let p = if is_bot {
                rng.random_range(0.70 + LABEL_MARGIN..=0.99)
            } else {
                rng.random_range(0.01..=0.70 - LABEL_MARGIN)
            };
            UserProfile {
                user_id: user_id(j),
                created_at: earliest + Duration::days(rng.random_range(0..account_span)),
                bot_probability: round_to(p, 3),
            }
        })
        .collect();

    let references = if config.embedding_dim > 0 { make_references(config.seed, config.embedding_dim) } else { vec![] };
    let period_slugs: Vec<String> = config.periods.periods().iter().map(|p| term_slug(&p.label)).collect();
    let cumulative: Vec<f64> = config
        .period_mix
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let generated: Vec<(Tweet, MisinfoLabel)> = (0..config.n_tweets)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(config.seed, STREAM_TWEETS, i as u64);
            let u: f64 = rng.random();
            let p_idx = cumulative.iter().position(|c| u < *c).unwrap_or_else(|| {
                // Rounding can leave the last cumulative share just below 1.
                config.period_mix.iter().rposition(|w| *w > 0.0).expect("mix sums to 1")
            });
            let period = &config.periods.periods()[p_idx];
            let days = (period.end - period.start).num_days() + 1;
            let day = period.start + Duration::days(rng.random_range(0..days));
            let secs = rng.random_range(0..86_400);
            let created_at = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).expect("midnight"))
                + Duration::seconds(secs);

            let a = rng.random_range(0..config.n_users);
            let is_bot = a < n_bots;
            let is_misinfo = rng.random::<f64>() < config.misinfo_fraction;
            let misinfo_type = is_misinfo.then(|| MisinfoType::ALL[rng.random_range(0..MisinfoType::ALL.len())]);
            let is_retweet = rng.random::<f64>() < config.retweet_fraction;
            let retweeted = is_retweet.then(|| user_id(pick_other(&mut rng, config.n_users, a)));
            let n_mentions = if config.mention_rate > 0.0 {
                Poisson::new(config.mention_rate).expect("positive rate").sample(&mut rng) as usize
            } else {
                0
            };
            let mut mentions: Vec<String> =
                (0..n_mentions).map(|_| user_id(pick_other(&mut rng, config.n_users, a))).collect();
            mentions.sort();
            mentions.dedup();

            let age = (period.end - users[a].created_at).num_days() as f64;
            let bot = f64::from(u8::from(is_bot));
            let mut eta = config.coefficient("intercept") + config.coefficient("bot") * bot;
            if p_idx > 0 {
                let slug = &period_slugs[p_idx];
                eta += config.coefficient(slug) + config.coefficient(&format!("bot_x_{slug}")) * bot;
            }
            if let Some(t) = misinfo_type {
                eta += config.coefficient(t.as_str());
            }
            if is_retweet {
                eta += config.coefficient("is_retweet");
            }
            eta += config.coefficient("account_age_days") * age;
            let draw = sample_tweedie(eta.exp(), config.power, config.dispersion, &mut rng)?;

            let label = MisinfoLabel { is_misinfo, misinfo_type, similarity: None, matched_reference_id: None };
            let (embedding, precomputed) = if references.is_empty() {
                (None, Some(label.clone()))
            } else {
                (Some(planted_embedding(&mut rng, &references, misinfo_type, config.embedding_dim)), None)
            };
            Ok((
                Tweet {
                    tweet_id: format!("t{i:0tw$}"),
                    author_id: user_id(a),
                    created_at,
                    is_retweet,
                    retweeted_author_id: retweeted,
                    mentioned_author_ids: mentions,
                    retweet_count: draw.round() as u64,
                    embedding,
                    misinfo_label: precomputed,
                },
                label,
            ))
        })
        .collect::<Result<_, SynthError>>()?;

    let mut labels = Labels::default();
    let mut tweets = Vec::with_capacity(generated.len());
    for (t, l) in generated {
        labels.misinfo.insert(t.tweet_id.clone(), l);
        tweets.push(t);
    }
    for (j, u) in users.iter().enumerate() {
        labels.bots.insert(u.user_id.clone(), j < n_bots);
        labels.bot_probabilities.insert(u.user_id.clone(), u.bot_probability);
    }
    let n_misinfo = labels.misinfo.values().filter(|l| l.is_misinfo).count();
    let truth = GroundTruth {
        seed: config.seed,
        power: config.power,
        dispersion: config.dispersion,
        coefficients: config.coefficients.clone(),
        response: "retweet_count".into(),
        n_users: config.n_users,
        n_bots,
        n_tweets: config.n_tweets,
        n_misinfo,
    };
    let corpus = Corpus {
        tweets,
        users: users.into_iter().map(|u| (u.user_id.clone(), u)).collect(),
        periods: config.periods.clone(),
    };
    Ok(SynthCorpus { corpus, references, labels, truth })
}

/// Embedding whose nearest reference reproduces the planted label with a
/// margin around the threshold.
fn planted_embedding(
    rng: &mut ChaCha8Rng,
    references: &[ReferenceTweet],
    misinfo_type: Option<MisinfoType>,
    dim: usize,
) -> Vec<f64> {
    let threshold = crate::classify::DEFAULT_MISINFO_THRESHOLD;
    let noise_sd = 0.6 / (dim as f64).sqrt();
    loop {
        let v: Vec<f64> = match misinfo_type {
            Some(t) => {
                let r = references.iter().find(|r| r.misinfo_type == t).expect("one reference per type");
                let noise = gaussian_vector(rng, dim, noise_sd);
                r.embedding.iter().zip(noise).map(|(a, b)| round_to(a + b, 6)).collect()
            }
            None => gaussian_vector(rng, dim, 1.0).into_iter().map(|x| round_to(x, 6)).collect(),
        };
        if v.iter().all(|x| *x == 0.0) {
            continue;
        }
        let label = label_misinformation(&v, references, threshold).expect("dimensions agree");
        let best = references
            .iter()
            .map(|r| crate::classify::cosine_similarity(&v, &r.embedding).expect("dimensions agree"))
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = match misinfo_type {
            Some(t) => label.misinfo_type == Some(t) && best >= threshold + LABEL_MARGIN,
            None => best < threshold - LABEL_MARGIN,
        };
        if ok {
            return v;
        }
    }
}

/// Writes `tweets.jsonl`, `users.csv`, `truth.json` and, when embeddings
/// are used, `references.jsonl` into `dir`. Returns the written file names.
pub fn write_corpus_files(synth: &SynthCorpus, dir: &Path) -> Result<Vec<String>, SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut w = BufWriter::new(File::create(dir.join("tweets.jsonl"))?);
    write_tweets(&mut w, &synth.corpus.tweets)?;
    w.flush()?;
    written.push("tweets.jsonl".to_string());

    let mut w = BufWriter::new(File::create(dir.join("users.csv"))?);
    write_users(&mut w, synth.corpus.users.values())?;
    w.flush()?;
    written.push("users.csv".to_string());

    if !synth.references.is_empty() {
        let mut w = BufWriter::new(File::create(dir.join("references.jsonl"))?);
        write_references(&mut w, &synth.references)?;
        w.flush()?;
        written.push("references.jsonl".to_string());
    }

    let mut json = serde_json::to_string_pretty(&synth.truth).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("truth.json"), json)?;
    written.push("truth.json".to_string());
    Ok(written)
}
