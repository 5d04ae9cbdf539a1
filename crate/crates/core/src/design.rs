//! Regression design for the Baseline and Conditional Effect models, VIF
//! diagnostics, multiplicative effect readings and descriptive statistics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classify::{Labels, MisinfoType};
use crate::corpus::{Corpus, PeriodConfig};
use crate::influence::MetricRecord;
use crate::table::Table;

pub const VIF_THRESHOLD: f64 = 5.0;

/// `1 − R²` at or below this is treated as perfect collinearity.
const COLLINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("no records to build a design from")]
    Empty,
    #[error("record `{0}` is not misinformation; models are fitted on misinformation tweets only")]
    NotMisinfo(String),
    #[error("misinformation record `{0}` has no misinformation type")]
    MissingType(String),
    #[error("record `{tweet_id}` has unknown period `{period}`")]
    UnknownPeriod { tweet_id: String, period: String },
    #[error("design has no intercept column")]
    NoIntercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Baseline,
    Conditional,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Baseline, ModelKind::Conditional];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Conditional => "conditional",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "conditional" => Ok(ModelKind::Conditional),
            o => Err(format!("unknown model `{o}` (expected baseline or conditional)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dv {
    Appeal,
    Scope,
}

impl Dv {
    pub const ALL: [Dv; 2] = [Dv::Appeal, Dv::Scope];

    pub fn as_str(self) -> &'static str {
        match self {
            Dv::Appeal => "appeal",
            Dv::Scope => "scope",
        }
    }

    pub fn of(self, r: &MetricRecord) -> f64 {
        match self {
            Dv::Appeal => r.appeal,
            Dv::Scope => r.scope,
        }
    }
}

impl FromStr for Dv {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "appeal" => Ok(Dv::Appeal),
            "scope" => Ok(Dv::Scope),
            o => Err(format!("unknown dependent variable `{o}` (expected appeal or scope)")),
        }
    }
}

impl fmt::Display for Dv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reference levels are fixed: the first configured period, the
/// `conspiracy` type, human accounts and original tweets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dv: Dv,
    /// Centre and scale account age; off by default.
    pub standardize_age: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dv: Dv) -> Self {
        Self { kind, dv, standardize_age: false }
    }
}

pub const REFERENCE_TYPE: MisinfoType = MisinfoType::Conspiracy;

/// Lower-case, underscore-separated column name for a period label.
pub fn term_slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub response: Vec<f64>,
    pub row_keys: Vec<String>,
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }
}

/// Column names in canonical order before empty categories are dropped.
pub fn design_columns(periods: &PeriodConfig, kind: ModelKind) -> Vec<String> {
    let period_terms: Vec<String> = periods.periods()[1..].iter().map(|p| term_slug(&p.label)).collect();
    let mut cols = vec!["intercept".to_string(), "bot".to_string()];
    cols.extend(period_terms.iter().cloned());
    if kind == ModelKind::Conditional {
        cols.extend(period_terms.iter().map(|t| format!("bot_x_{t}")));
    }
    cols.extend(MisinfoType::ALL.iter().filter(|t| **t != REFERENCE_TYPE).map(|t| t.as_str().to_string()));
    cols.push("is_retweet".into());
    cols.push("account_age_days".into());
    cols
}

/// Builds the misinformation-only design for one model and response.
pub fn build_design_matrix(
    records: &[MetricRecord],
    periods: &PeriodConfig,
    spec: &ModelSpec,
) -> Result<DesignMatrix, DesignError> {
    if records.is_empty() {
        return Err(DesignError::Empty);
    }
    let all_columns = design_columns(periods, spec.kind);
    let n_periods = periods.len();
    let types: Vec<MisinfoType> = MisinfoType::ALL.into_iter().filter(|t| *t != REFERENCE_TYPE).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(records.len());
    for r in records {
        if !r.is_misinfo {
            return Err(DesignError::NotMisinfo(r.tweet_id.clone()));
        }
        let ty = r.misinfo_type.ok_or_else(|| DesignError::MissingType(r.tweet_id.clone()))?;
        let p = periods.index_of(&r.period).ok_or_else(|| DesignError::UnknownPeriod {
            tweet_id: r.tweet_id.clone(),
            period: r.period.clone(),
        })?;
        let bot = f64::from(u8::from(r.is_bot));
        let mut row = Vec::with_capacity(all_columns.len());
        row.push(1.0);
        row.push(bot);
        let period_dummies: Vec<f64> = (1..n_periods).map(|q| f64::from(u8::from(p == q))).collect();
        row.extend(&period_dummies);
        if spec.kind == ModelKind::Conditional {
            row.extend(period_dummies.iter().map(|d| bot * d));
        }
        row.extend(types.iter().map(|t| f64::from(u8::from(*t == ty))));
        row.push(f64::from(u8::from(r.is_retweet)));
        row.push(f64::from(r.account_age_days));
        rows.push(row);
    }

    let age_col = all_columns.len() - 1;
    let mut warnings = Vec::new();
    let mut keep: Vec<usize> = Vec::new();
    for (j, name) in all_columns.iter().enumerate() {
        if j == 0 || j == age_col {
            keep.push(j);
        } else if rows.iter().all(|r| r[j] == 0.0) {
            warnings.push(format!("column `{name}` dropped: no observations in this category"));
        } else {
            keep.push(j);
        }
    }
    if spec.standardize_age {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r[age_col]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[age_col] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in &mut rows {
            r[age_col] = if sd > 0.0 { (r[age_col] - mean) / sd } else { 0.0 };
        }
    }

    let values = DMatrix::from_fn(rows.len(), keep.len(), |i, j| rows[i][keep[j]]);
    Ok(DesignMatrix {
        columns: keep.iter().map(|&j| all_columns[j].clone()).collect(),
        values,
        response: records.iter().map(|r| spec.dv.of(r)).collect(),
        row_keys: records.iter().map(|r| r.tweet_id.clone()).collect(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VifEntry {
    pub term: String,
    pub vif: f64,
    pub warning: Option<String>,
}

/// Variance inflation factor for every non-intercept column: regress the
/// column on all the others (intercept included) and take `1 / (1 − R²)`.
pub fn vif(design: &DesignMatrix) -> Result<Vec<VifEntry>, DesignError> {
    if design.columns.first().map(String::as_str) != Some("intercept") {
        return Err(DesignError::NoIntercept);
    }
    let x = &design.values;
    let (n, k) = x.shape();
    let mut out = Vec::with_capacity(k.saturating_sub(1));
    for j in 1..k {
        let target = x.column(j).into_owned();
        let others_idx: Vec<usize> = (0..k).filter(|&c| c != j).collect();
        let others = x.select_columns(&others_idx);
        let mean = target.mean();
        let sst: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
        let one_minus_r2 = if sst == 0.0 {
            0.0
        } else {
            let ssr = residual_sum_of_squares(&others, &target, n);
            ssr / sst
        };
        let term = design.columns[j].clone();
        if one_minus_r2 <= COLLINEAR_TOLERANCE {
            out.push(VifEntry {
                warning: Some(format!("`{term}` is perfectly collinear with other columns")),
                term,
                vif: f64::INFINITY,
            });
        } else {
            out.push(VifEntry { term, vif: 1.0 / one_minus_r2, warning: None });
        }
    }
    Ok(out)
}

fn residual_sum_of_squares(others: &DMatrix<f64>, target: &DVector<f64>, n: usize) -> f64 {
    let svd = others.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * f64::EPSILON * n.max(others.ncols()) as f64;
    let coef = svd.solve(target, eps).expect("SVD computed with U and V");
    let fitted = others * coef;
    (target - fitted).norm_squared()
}

/// Percent change in the mean implied by a log-link coefficient.
pub fn effect_percent(coefficient: f64) -> f64 {
    coefficient.exp_m1() * 100.0
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeriodDescriptives {
    pub period: String,
    pub tweets: usize,
    pub bot_misinfo: usize,
    pub bot_regular: usize,
    pub human_misinfo: usize,
    pub human_regular: usize,
    /// Misinformation tweets over all tweets in the period.
    pub misinfo_share: f64,
    /// This period's share of all in-window misinformation tweets.
    pub share_of_all_misinfo: f64,
    pub bot_accounts: usize,
    pub human_accounts: usize,
    pub bot_to_human_ratio: f64,
    pub bot_misinfo_share: f64,
    pub human_misinfo_share: f64,
}

fn share(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-period tweet counts by account class and content class, with the
/// derived shares. Empty periods yield zero rows rather than NaN.
pub fn descriptive_stats(corpus: &Corpus, labels: &Labels) -> Vec<PeriodDescriptives> {
    let mut rows: Vec<PeriodDescriptives> = corpus
        .periods
        .periods()
        .iter()
        .map(|p| PeriodDescriptives { period: p.label.clone(), ..Default::default() })
        .collect();
    let mut authors: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); rows.len()];
    for (p, t) in corpus.in_period() {
        let row = &mut rows[p];
        let bot = labels.is_bot(&t.author_id);
        let misinfo = labels.is_misinfo(&t.tweet_id);
        row.tweets += 1;
        match (bot, misinfo) {
            (true, true) => row.bot_misinfo += 1,
            (true, false) => row.bot_regular += 1,
            (false, true) => row.human_misinfo += 1,
            (false, false) => row.human_regular += 1,
        }
        authors[p].insert(t.author_id.as_str());
    }
    let total_misinfo: usize = rows.iter().map(|r| r.bot_misinfo + r.human_misinfo).sum();
    let bot_of: HashMap<&str, bool> = labels.bots.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    for (row, accounts) in rows.iter_mut().zip(&authors) {
        let misinfo = row.bot_misinfo + row.human_misinfo;
        row.misinfo_share = share(misinfo, row.tweets);
        row.share_of_all_misinfo = share(misinfo, total_misinfo);
        row.bot_accounts = accounts.iter().filter(|a| bot_of.get(*a).copied().unwrap_or(false)).count();
        row.human_accounts = accounts.len() - row.bot_accounts;
        row.bot_to_human_ratio = share(row.bot_accounts, row.human_accounts);
        row.bot_misinfo_share = share(row.bot_misinfo, row.bot_misinfo + row.bot_regular);
        row.human_misinfo_share = share(row.human_misinfo, row.human_misinfo + row.human_regular);
    }
    rows
}

pub fn descriptives_table(rows: &[PeriodDescriptives]) -> Table {
    let mut t = Table::new([
        "period",
        "tweets",
        "bot_misinfo",
        "bot_regular",
        "human_misinfo",
        "human_regular",
        "misinfo_share",
        "share_of_all_misinfo",
        "bot_accounts",
        "human_accounts",
        "bot_to_human_ratio",
        "bot_misinfo_share",
        "human_misinfo_share",
    ]);
    for r in rows {
        t.push(vec![
            r.period.as_str().into(),
            r.tweets.into(),
            r.bot_misinfo.into(),
            r.bot_regular.into(),
            r.human_misinfo.into(),
            r.human_regular.into(),
            r.misinfo_share.into(),
            r.share_of_all_misinfo.into(),
            r.bot_accounts.into(),
            r.human_accounts.into(),
            r.bot_to_human_ratio.into(),
            r.bot_misinfo_share.into(),
            r.human_misinfo_share.into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::MisinfoLabel;
    use crate::corpus::{Tweet, UserProfile};
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn record(id: &str, bot: bool, period: &str, ty: MisinfoType, retweet: bool, age: u32) -> MetricRecord {
        MetricRecord {
            tweet_id: id.into(),
            period: period.into(),
            appeal: 1.0,
            scope: 2.0,
            retweet_count: 1,
            total_degree: 1,
            degree_percentile: 0.5,
            retweet_percentile: 0.5,
            is_bot: bot,
            is_misinfo: true,
            misinfo_type: Some(ty),
            is_retweet: retweet,
            account_age_days: age,
        }
    }

    /// One record of every category so no column is dropped.
    fn full_records() -> Vec<MetricRecord> {
        let periods = ["Pre-Vaccine", "Vaccine Launch", "Post-Vaccine"];
        let mut out = Vec::new();
        let mut i = 0;
        for (pi, p) in periods.iter().enumerate() {
            for (ti, t) in MisinfoType::ALL.iter().enumerate() {
                for bot in [false, true] {
                    out.push(record(&format!("t{i}"), bot, p, *t, (i % 3) == 0, (100 + 37 * i + pi * ti) as u32));
                    i += 1;
                }
            }
        }
        out
    }

    #[test]
    fn column_layout() {
        let periods = PeriodConfig::covid_vaccine();
        let records = full_records();
        let base = build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Baseline, Dv::Appeal)).unwrap();
        assert_eq!(
            base.columns,
            [
                "intercept",
                "bot",
                "vaccine_launch",
                "post_vaccine",
                "fake_cure",
                "fake_treatment",
                "false_fact_or_prevention",
                "false_public_health_response",
                "is_retweet",
                "account_age_days"
            ]
        );
        let cond =
            build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Conditional, Dv::Scope)).unwrap();
        assert_eq!(cond.columns.len(), 12);
        assert_eq!(cond.columns[4], "bot_x_vaccine_launch");
        assert_eq!(cond.columns[5], "bot_x_post_vaccine");
        assert!(cond.response.iter().all(|v| *v == 2.0));
        assert!(base.warnings.is_empty());
    }

    #[test]
    fn reference_level_row() {
        let periods = PeriodConfig::covid_vaccine();
        let mut records = full_records();
        records.insert(0, record("ref", false, "Pre-Vaccine", MisinfoType::Conspiracy, false, 365));
        let dm = build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Baseline, Dv::Appeal)).unwrap();
        let row: Vec<f64> = dm.values.row(0).iter().copied().collect();
        assert_eq!(row, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 365.0]);
    }

    #[test]
    fn bot_vaccine_launch_row() {
        let periods = PeriodConfig::covid_vaccine();
        let mut records = full_records();
        records.insert(0, record("x", true, "Vaccine Launch", MisinfoType::FakeCure, true, 10));
        let dm = build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Conditional, Dv::Appeal)).unwrap();
        let row: Vec<f64> = dm.values.row(0).iter().copied().collect();
        let expected = [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 10.0];
        assert_eq!(row, expected);
    }

    #[test]
    fn empty_category_dropped_with_warning() {
        let periods = PeriodConfig::covid_vaccine();
        let records: Vec<MetricRecord> = full_records().into_iter().filter(|r| r.period != "Post-Vaccine").collect();
        let dm = build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Conditional, Dv::Appeal)).unwrap();
        assert!(!dm.columns.contains(&"post_vaccine".to_string()));
        assert!(!dm.columns.contains(&"bot_x_post_vaccine".to_string()));
        assert_eq!(dm.warnings.len(), 2);
    }

    #[test]
    fn design_errors() {
        let periods = PeriodConfig::covid_vaccine();
        let spec = ModelSpec::new(ModelKind::Baseline, Dv::Appeal);
        assert_eq!(build_design_matrix(&[], &periods, &spec), Err(DesignError::Empty));
        let mut r = record("a", false, "Pre-Vaccine", MisinfoType::FakeCure, false, 1);
        r.is_misinfo = false;
        assert_eq!(build_design_matrix(&[r], &periods, &spec), Err(DesignError::NotMisinfo("a".into())));
        let r = record("b", false, "Elsewhere", MisinfoType::FakeCure, false, 1);
        assert!(matches!(build_design_matrix(&[r], &periods, &spec), Err(DesignError::UnknownPeriod { .. })));
    }

    #[test]
    fn standardized_age_has_zero_mean() {
        let periods = PeriodConfig::covid_vaccine();
        let spec = ModelSpec { standardize_age: true, ..ModelSpec::new(ModelKind::Baseline, Dv::Appeal) };
        let dm = build_design_matrix(&full_records(), &periods, &spec).unwrap();
        let age = dm.column("account_age_days").unwrap();
        assert!(age.iter().sum::<f64>().abs() < 1e-9);
    }

    fn design_from_columns(cols: &[Vec<f64>]) -> DesignMatrix {
        let n = cols[0].len();
        let mut names = vec!["intercept".to_string()];
        names.extend((0..cols.len()).map(|i| format!("x{i}")));
        let values = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        DesignMatrix { columns: names, values, response: vec![0.0; n], row_keys: vec![], warnings: vec![] }
    }

    #[test]
    fn vif_examples() {
        let a = vec![1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0];
        let v = vif(&design_from_columns(&[a.clone(), b.clone()])).unwrap();
        assert_eq!(v[0].vif, 1.0);
        assert_eq!(v[1].vif, 1.0);

        let c = 0.9;
        let s = (1.0f64 - c * c).sqrt();
        let x2: Vec<f64> = a.iter().zip(&b).map(|(u, w)| c * u + s * w).collect();
        let v = vif(&design_from_columns(&[a.clone(), x2])).unwrap();
        for e in &v {
            assert!((e.vif - 1.0 / (1.0 - 0.81)).abs() < 1e-6, "{}", e.vif);
        }

        let v = vif(&design_from_columns(&[a.clone(), a.clone(), b])).unwrap();
        assert_eq!(v[0].vif, f64::INFINITY);
        assert_eq!(v[1].vif, f64::INFINITY);
        assert!(v[0].warning.as_ref().unwrap().contains("x0"));
        assert!(v[2].vif.is_finite());
    }

    #[test]
    fn effect_percent_examples() {
        assert!((effect_percent(-2.42) - -91.11).abs() < 0.005);
        assert!((effect_percent(-2.26) - -89.56).abs() < 0.005);
        assert!((effect_percent(0.42) - 52.20).abs() < 0.005);
        assert_eq!(effect_percent(0.0), 0.0);
    }

    fn corpus_with(users: &[(&str, f64)], tweets: &[(&str, &str, &str)]) -> Corpus {
        let users = users
            .iter()
            .map(|(id, p)| {
                (
                    id.to_string(),
                    UserProfile {
                        user_id: id.to_string(),
                        created_at: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
                        bot_probability: *p,
                    },
                )
            })
            .collect::<BTreeMap<_, _>>();
        let tweets = tweets
            .iter()
            .map(|(id, author, at)| Tweet {
                tweet_id: id.to_string(),
                author_id: author.to_string(),
                created_at: at.parse().unwrap(),
                is_retweet: false,
                retweeted_author_id: None,
                mentioned_author_ids: vec![],
                retweet_count: 0,
                embedding: None,
                misinfo_label: None,
            })
            .collect();
        Corpus { tweets, users, periods: PeriodConfig::covid_vaccine() }
    }

    fn labels_for(corpus: &Corpus, misinfo: &[&str]) -> Labels {
        let mut l = Labels::default();
        for t in &corpus.tweets {
            let is = misinfo.contains(&t.tweet_id.as_str());
            l.misinfo.insert(
                t.tweet_id.clone(),
                MisinfoLabel {
                    is_misinfo: is,
                    misinfo_type: is.then_some(MisinfoType::FakeCure),
                    ..Default::default()
                },
            );
        }
        for (id, u) in &corpus.users {
            l.bots.insert(id.clone(), u.bot_probability > 0.7);
        }
        l
    }

    #[test]
    fn descriptive_shares() {
        let at = "2020-12-02T00:00:00Z";
        let corpus = corpus_with(&[("h", 0.1), ("b", 0.9)], &[("1", "h", at), ("2", "h", at), ("3", "b", at), ("4", "b", at)]);
        let labels = labels_for(&corpus, &["3"]);
        let rows = descriptive_stats(&corpus, &labels);
        assert_eq!(rows[0].misinfo_share, 0.25);
        assert_eq!(rows[0].bot_misinfo_share, 0.5);
        assert_eq!(rows[0].share_of_all_misinfo, 1.0);
        assert_eq!(rows[1], PeriodDescriptives { period: "Vaccine Launch".into(), ..Default::default() });
        let csv = descriptives_table(&rows).to_csv();
        assert!(csv.contains("\nVaccine Launch,0,0,0,0,0,0,0,0,0,0,0,0\n"));
    }

    #[test]
    fn bot_to_human_account_ratio() {
        let at = "2020-12-03T00:00:00Z";
        let mut users = Vec::new();
        let mut tweets = Vec::new();
        let ids: Vec<String> = (0..27).map(|i| format!("u{i:02}")).collect();
        for (i, id) in ids.iter().enumerate() {
            users.push((id.as_str(), if i < 7 { 0.95 } else { 0.2 }));
        }
        let tids: Vec<String> = (0..27).map(|i| format!("t{i}")).collect();
        for i in 0..27 {
            tweets.push((tids[i].as_str(), ids[i].as_str(), at));
        }
        let corpus = corpus_with(&users, &tweets);
        let labels = labels_for(&corpus, &[]);
        let rows = descriptive_stats(&corpus, &labels);
        assert_eq!(rows[0].bot_accounts, 7);
        assert_eq!(rows[0].human_accounts, 20);
        assert!((rows[0].bot_to_human_ratio - 0.35).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn dummies_exclusive_and_interactions_consistent(
            specs in proptest::collection::vec((any::<bool>(), 0usize..3, 0usize..5, any::<bool>(), 0u32..5000), 1..60)
        ) {
            let periods = PeriodConfig::covid_vaccine();
            let labels = ["Pre-Vaccine", "Vaccine Launch", "Post-Vaccine"];
            let mut records = full_records();
            for (i, (bot, p, t, rt, age)) in specs.into_iter().enumerate() {
                records.push(record(&format!("r{i}"), bot, labels[p], MisinfoType::ALL[t], rt, age));
            }
            let dm = build_design_matrix(&records, &periods, &ModelSpec::new(ModelKind::Conditional, Dv::Appeal)).unwrap();
            let col = |n: &str| dm.column(n).unwrap();
            let (bot, vl, pv) = (col("bot"), col("vaccine_launch"), col("post_vaccine"));
            let (bvl, bpv) = (col("bot_x_vaccine_launch"), col("bot_x_post_vaccine"));
            let types: Vec<Vec<f64>> = ["fake_cure", "fake_treatment", "false_fact_or_prevention", "false_public_health_response"]
                .iter().map(|n| col(n)).collect();
            for i in 0..records.len() {
                prop_assert!(vl[i] + pv[i] <= 1.0);
                prop_assert!(types.iter().map(|c| c[i]).sum::<f64>() <= 1.0);
                prop_assert_eq!(bvl[i], bot[i] * vl[i]);
                prop_assert_eq!(bpv[i], bot[i] * pv[i]);
                prop_assert_eq!(dm.values[(i, 0)], 1.0);
            }
        }

        #[test]
        fn effect_percent_inverse_pair(a in -5.0f64..5.0) {
            let prod = (1.0 + effect_percent(a) / 100.0) * (1.0 + effect_percent(-a) / 100.0);
            prop_assert!((prod - 1.0).abs() < 1e-12);
        }

        #[test]
        fn vif_at_least_one_and_orthogonal_column_is_neutral(
            cols in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 16), 2..4)
        ) {
            // Centre each column, then append a column orthogonal to the
            // span of the intercept and every existing column.
            let mut cols: Vec<Vec<f64>> = cols
                .into_iter()
                .map(|c| {
                    let m = c.iter().sum::<f64>() / c.len() as f64;
                    c.into_iter().map(|v| v - m).collect()
                })
                .collect();
            let before = vif(&design_from_columns(&cols)).unwrap();
            for e in &before {
                prop_assert!(e.vif >= 1.0 - 1e-12);
            }
            let basis = design_from_columns(&cols).values;
            let mut extra: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 - 2.0) + (i as f64 * 1.3).sin()).collect();
            let q = basis.clone().qr().q();
            let e = DVector::from_vec(extra.clone());
            let proj = &q * (q.transpose() * &e);
            extra = (e - proj).iter().copied().collect();
            prop_assume!(extra.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            cols.push(extra);
            let after = vif(&design_from_columns(&cols)).unwrap();
            for (b, a) in before.iter().zip(&after) {
                if b.vif.is_finite() && b.vif < 1e6 {
                    prop_assert!((a.vif - b.vif).abs() <= 1e-6 * b.vif, "{} vs {}", a.vif, b.vif);
                }
            }
            prop_assert!((after.last().unwrap().vif - 1.0).abs() < 1e-9);
        }
    }
}
