//! Appeal and Scope metrics.
//!
//! Appeal weights a tweet's retweet count by its author's standing in the
//! period network; Scope weights the author's total degree by how the tweet's
//! retweet count ranks in the period:
//!
//! ```text
//! appeal = retweet_count × (1 + degree_percentile(author, period))
//! scope  = total_degree(author, period) × (1 + retweet_percentile(tweet, period))
//! ```
//!
//! Percentiles are mid-distribution ranks (strictly-below share plus half the
//! tied share), so tie-heavy populations still average to exactly one half.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{account_age, ClassifyError, Labels, MisinfoType};
use crate::corpus::{Corpus, PeriodConfig, Tweet};
use crate::netgraph::CommNetwork;
use crate::table::{fmt_sig, Cell, Table};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("percentile of an empty population")]
    EmptyPopulation,
    #[error("value {0} is not a member of the population")]
    NotInPopulation(f64),
    #[error("no network built for period `{0}`")]
    MissingNetwork(String),
    #[error("author `{author}` of tweet `{tweet_id}` is not a node of the `{period}` network")]
    AuthorNotInNetwork { tweet_id: String, author: String, period: String },
    #[error("author `{0}` has no user record")]
    UnresolvedAuthor(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("metrics table: {0}")]
    Table(String),
}

/// Mid-distribution percentile of `value` within `population`.
pub fn percentile_rank(population: &[f64], value: f64) -> Result<f64, InfluenceError> {
    if population.is_empty() {
        return Err(InfluenceError::EmptyPopulation);
    }
    let below = population.iter().filter(|x| **x < value).count();
    let equal = population.iter().filter(|x| **x == value).count();
    if equal == 0 {
        return Err(InfluenceError::NotInPopulation(value));
    }
    Ok((below as f64 + 0.5 * equal as f64) / population.len() as f64)
}

/// Sorted population for repeated percentile lookups.
#[derive(Debug, Clone)]
pub struct PercentileIndex {
    sorted: Vec<f64>,
}

impl PercentileIndex {
    pub fn new(population: impl IntoIterator<Item = f64>) -> Result<Self, InfluenceError> {
        let mut sorted: Vec<f64> = population.into_iter().collect();
        if sorted.is_empty() {
            return Err(InfluenceError::EmptyPopulation);
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Exact rank as `(2·below + equal, 2·n)`.
    pub fn rank_fraction(&self, value: f64) -> Result<(u64, u64), InfluenceError> {
        let below = self.sorted.partition_point(|x| *x < value);
        let upto = self.sorted.partition_point(|x| *x <= value);
        if upto == below {
            return Err(InfluenceError::NotInPopulation(value));
        }
        Ok(((2 * below + (upto - below)) as u64, 2 * self.sorted.len() as u64))
    }

    pub fn rank(&self, value: f64) -> Result<f64, InfluenceError> {
        let (num, den) = self.rank_fraction(value)?;
        Ok(num as f64 / den as f64)
    }
}

pub fn appeal(retweet_count: u64, degree_percentile: f64) -> f64 {
    retweet_count as f64 * (1.0 + degree_percentile)
}

pub fn scope(total_degree: u64, retweet_percentile: f64) -> f64 {
    total_degree as f64 * (1.0 + retweet_percentile)
}

/// Per-tweet analysis row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub tweet_id: String,
    pub period: String,
    pub appeal: f64,
    pub scope: f64,
    pub retweet_count: u64,
    pub total_degree: u64,
    pub degree_percentile: f64,
    pub retweet_percentile: f64,
    pub is_bot: bool,
    pub is_misinfo: bool,
    pub misinfo_type: Option<MisinfoType>,
    pub is_retweet: bool,
    pub account_age_days: u32,
}

/// One record per in-period tweet, ordered by period then tweet id.
/// Percentile populations are period-wide: every node degree for the
/// degree percentile, every in-period tweet for the retweet percentile.
pub fn compute_metrics(
    corpus: &Corpus,
    networks: &[CommNetwork],
    labels: &Labels,
) -> Result<Vec<MetricRecord>, InfluenceError> {
    let mut by_period: Vec<Vec<&Tweet>> = vec![Vec::new(); corpus.periods.len()];
    for (p, t) in corpus.in_period() {
        by_period[p].push(t);
    }
    let per_period: Vec<Vec<MetricRecord>> = corpus
        .periods
        .periods()
        .par_iter()
        .zip(by_period.par_iter())
        .map(|(period, tweets)| {
            if tweets.is_empty() {
                return Ok(Vec::new());
            }
            let network = networks
                .iter()
                .find(|n| n.period == period.label)
                .ok_or_else(|| InfluenceError::MissingNetwork(period.label.clone()))?;
            let degree_index = PercentileIndex::new(network.degrees.values().map(|d| d.total as f64))?;
            let retweet_index = PercentileIndex::new(tweets.iter().map(|t| t.retweet_count as f64))?;
            let mut records = Vec::with_capacity(tweets.len());
            for t in tweets {
                let degree = network.degrees.get(&t.author_id).ok_or_else(|| InfluenceError::AuthorNotInNetwork {
                    tweet_id: t.tweet_id.clone(),
                    author: t.author_id.clone(),
                    period: period.label.clone(),
                })?;
                let user =
                    corpus.users.get(&t.author_id).ok_or_else(|| InfluenceError::UnresolvedAuthor(t.author_id.clone()))?;
                let degree_percentile = degree_index.rank(degree.total as f64)?;
                let retweet_percentile = retweet_index.rank(t.retweet_count as f64)?;
                let label = labels.misinfo.get(&t.tweet_id);
                records.push(MetricRecord {
                    tweet_id: t.tweet_id.clone(),
                    period: period.label.clone(),
                    appeal: appeal(t.retweet_count, degree_percentile),
                    scope: scope(degree.total, retweet_percentile),
                    retweet_count: t.retweet_count,
                    total_degree: degree.total,
                    degree_percentile,
                    retweet_percentile,
                    is_bot: labels.is_bot(&t.author_id),
                    is_misinfo: label.is_some_and(|l| l.is_misinfo),
                    misinfo_type: label.and_then(|l| l.misinfo_type),
                    is_retweet: t.is_retweet,
                    account_age_days: account_age(user.created_at, period.end)?,
                });
            }
            records.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
            Ok(records)
        })
        .collect::<Result<_, InfluenceError>>()?;
    Ok(per_period.into_iter().flatten().collect())
}

pub const METRICS_HEADER: [&str; 13] = [
    "tweet_id",
    "period",
    "appeal",
    "scope",
    "retweet_count",
    "total_degree",
    "degree_pct",
    "retweet_pct",
    "is_bot",
    "is_misinfo",
    "misinfo_type",
    "is_retweet",
    "account_age_days",
];

pub fn metrics_table(records: &[MetricRecord]) -> Table {
    let mut t = Table::new(METRICS_HEADER);
    for r in records {
        t.push(vec![
            r.tweet_id.as_str().into(),
            r.period.as_str().into(),
            r.appeal.into(),
            r.scope.into(),
            r.retweet_count.into(),
            r.total_degree.into(),
            r.degree_percentile.into(),
            r.retweet_percentile.into(),
            r.is_bot.into(),
            r.is_misinfo.into(),
            r.misinfo_type.map(|m| m.as_str()).into(),
            r.is_retweet.into(),
            Cell::Int(r.account_age_days as i64),
        ]);
    }
    t
}

/// Reads `metrics.csv` as written by [`metrics_table`].
pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricRecord>, InfluenceError> {
    let err = |e: String| InfluenceError::Table(e);
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(err(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let flag = |s: &str| match s {
        "1" => Ok(true),
        "0" => Ok(false),
        o => Err(err(format!("bad flag `{o}`"))),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(format!("{}: {e}", METRICS_HEADER[i])));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|e| err(format!("{}: {e}", METRICS_HEADER[i])));
        out.push(MetricRecord {
            tweet_id: rec[0].to_string(),
            period: rec[1].to_string(),
            appeal: num(2)?,
            scope: num(3)?,
            retweet_count: int(4)?,
            total_degree: int(5)?,
            degree_percentile: num(6)?,
            retweet_percentile: num(7)?,
            is_bot: flag(&rec[8])?,
            is_misinfo: flag(&rec[9])?,
            misinfo_type: if rec[10].is_empty() { None } else { Some(rec[10].parse().map_err(err)?) },
            is_retweet: flag(&rec[11])?,
            account_age_days: int(12)? as u32,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    BotMisinfo,
    HumanMisinfo,
    BotInfo,
    HumanInfo,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::BotMisinfo, Group::HumanMisinfo, Group::BotInfo, Group::HumanInfo];

    pub fn of(record: &MetricRecord) -> Group {
        match (record.is_bot, record.is_misinfo) {
            (true, true) => Group::BotMisinfo,
            (false, true) => Group::HumanMisinfo,
            (true, false) => Group::BotInfo,
            (false, false) => Group::HumanInfo,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::BotMisinfo => "BotMisinfo",
            Group::HumanMisinfo => "HumanMisinfo",
            Group::BotInfo => "BotInfo",
            Group::HumanInfo => "HumanInfo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    /// `None` for the all-periods row.
    pub period: Option<String>,
    pub group: Group,
    pub count: usize,
    pub mean_appeal: Option<f64>,
    pub mean_scope: Option<f64>,
}

impl GroupRow {
    pub fn ln_mean_appeal(&self) -> Option<f64> {
        self.mean_appeal.map(f64::ln_1p)
    }

    pub fn ln_mean_scope(&self) -> Option<f64> {
        self.mean_scope.map(f64::ln_1p)
    }
}

/// Ratio of group means, on the raw scale and on the ln(1 + mean) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    pub period: Option<String>,
    pub numerator: Group,
    pub denominator: Group,
    pub appeal_ratio: Option<f64>,
    pub scope_ratio: Option<f64>,
    pub ln_appeal_ratio: Option<f64>,
    pub ln_scope_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub rows: Vec<GroupRow>,
    pub contrasts: Vec<Contrast>,
}

impl GroupSummary {
    pub fn row(&self, period: Option<&str>, group: Group) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.period.as_deref() == period && r.group == group)
    }

    pub fn contrast(&self, period: Option<&str>, numerator: Group, denominator: Group) -> Option<&Contrast> {
        self.contrasts
            .iter()
            .find(|c| c.period.as_deref() == period && c.numerator == numerator && c.denominator == denominator)
    }
}

const CONTRASTS: [(Group, Group); 4] = [
    (Group::HumanMisinfo, Group::BotMisinfo),
    (Group::HumanInfo, Group::BotInfo),
    (Group::BotMisinfo, Group::BotInfo),
    (Group::HumanMisinfo, Group::HumanInfo),
];

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
        _ => None,
    }
}

/// Counts and mean metrics for the four account × content groups, overall and
/// per period (in `periods` order). Empty groups have no means.
pub fn summarize_groups(records: &[MetricRecord], periods: &PeriodConfig) -> GroupSummary {
    let mut scopes: Vec<Option<String>> = vec![None];
    scopes.extend(periods.periods().iter().map(|p| Some(p.label.clone())));
    let mut rows = Vec::new();
    let mut contrasts = Vec::new();
    for scope_label in scopes {
        let mut acc: BTreeMap<Group, (usize, f64, f64)> = BTreeMap::new();
        for r in records.iter().filter(|r| scope_label.as_ref().is_none_or(|p| *p == r.period)) {
            let e = acc.entry(Group::of(r)).or_default();
            e.0 += 1;
            e.1 += r.appeal;
            e.2 += r.scope;
        }
        let start = rows.len();
        for g in Group::ALL {
            let (count, sa, ss) = acc.get(&g).copied().unwrap_or_default();
            let mean = |s: f64| (count > 0).then(|| s / count as f64);
            rows.push(GroupRow {
                period: scope_label.clone(),
                group: g,
                count,
                mean_appeal: mean(sa),
                mean_scope: mean(ss),
            });
        }
        let find = |g: Group| rows[start..].iter().find(|r| r.group == g).expect("all groups present");
        for (n, d) in CONTRASTS {
            let (rn, rd) = (find(n), find(d));
            contrasts.push(Contrast {
                period: scope_label.clone(),
                numerator: n,
                denominator: d,
                appeal_ratio: ratio(rn.mean_appeal, rd.mean_appeal),
                scope_ratio: ratio(rn.mean_scope, rd.mean_scope),
                ln_appeal_ratio: ratio(rn.ln_mean_appeal(), rd.ln_mean_appeal()),
                ln_scope_ratio: ratio(rn.ln_mean_scope(), rd.ln_mean_scope()),
            });
        }
    }
    GroupSummary { rows, contrasts }
}

impl GroupSummary {
    pub fn table(&self) -> Table {
        let mut t =
            Table::new(["period", "group", "count", "mean_appeal", "mean_scope", "ln1p_mean_appeal", "ln1p_mean_scope"]);
        for r in &self.rows {
            t.push(vec![
                r.period.as_deref().unwrap_or("all").into(),
                r.group.as_str().into(),
                r.count.into(),
                r.mean_appeal.into(),
                r.mean_scope.into(),
                r.ln_mean_appeal().into(),
                r.ln_mean_scope().into(),
            ]);
        }
        t
    }

    pub fn contrasts_table(&self) -> Table {
        let mut t = Table::new([
            "period",
            "numerator",
            "denominator",
            "appeal_ratio",
            "scope_ratio",
            "ln1p_appeal_ratio",
            "ln1p_scope_ratio",
        ]);
        for c in &self.contrasts {
            t.push(vec![
                c.period.as_deref().unwrap_or("all").into(),
                c.numerator.as_str().into(),
                c.denominator.as_str().into(),
                c.appeal_ratio.into(),
                c.scope_ratio.into(),
                c.ln_appeal_ratio.into(),
                c.ln_scope_ratio.into(),
            ]);
        }
        t
    }

    /// Grouped bar chart of ln(1 + mean) for the all-periods rows, one panel
    /// per metric, with the untransformed mean printed above each bar.
    pub fn to_svg(&self) -> String {
        const W: f64 = 720.0;
        const H: f64 = 360.0;
        const PANEL_W: f64 = 320.0;
        const TOP: f64 = 50.0;
        const BOTTOM: f64 = 300.0;
        const COLORS: [&str; 4] = ["#2ca02c", "#1f77b4", "#98df8a", "#aec7e8"];
        let overall: Vec<&GroupRow> = Group::ALL.iter().filter_map(|g| self.row(None, *g)).collect();
        let panels: [(&str, Vec<Option<f64>>); 2] = [
            ("Appeal", overall.iter().map(|r| r.mean_appeal).collect()),
            ("Scope", overall.iter().map(|r| r.mean_scope).collect()),
        ];
        let max_ln = panels
            .iter()
            .flat_map(|(_, v)| v.iter().flatten())
            .map(|m| m.ln_1p())
            .fold(0.0f64, f64::max)
            .max(1e-12);

        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(s, "  <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">Average Appeal and Scope (ln(1 + mean))</text>",
            W / 2.0
        );
        for (pi, (title, means)) in panels.iter().enumerate() {
            let x0 = 40.0 + pi as f64 * (PANEL_W + 40.0);
            let _ = writeln!(s, "  <g>");
            let _ = writeln!(
                s,
                "    <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{title}</text>",
                x0 + PANEL_W / 2.0,
                TOP - 10.0
            );
            let _ = writeln!(
                s,
                "    <line x1=\"{x0}\" y1=\"{BOTTOM}\" x2=\"{}\" y2=\"{BOTTOM}\" stroke=\"black\"/>",
                x0 + PANEL_W
            );
            let slot = PANEL_W / 4.0;
            for (gi, mean) in means.iter().enumerate() {
                let bx = x0 + gi as f64 * slot + slot * 0.15;
                let bw = slot * 0.7;
                let h = mean.map(|m| m.ln_1p() / max_ln * (BOTTOM - TOP - 20.0)).unwrap_or(0.0);
                let y = BOTTOM - h;
                let _ = writeln!(
                    s,
                    "    <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                    fmt_sig(bx),
                    fmt_sig(y),
                    fmt_sig(bw),
                    fmt_sig(h),
                    COLORS[gi]
                );
                let label = mean.map(|m| format!("{m:.2}")).unwrap_or_else(|| "n/a".into());
                let _ = writeln!(
                    s,
                    "    <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    fmt_sig(bx + bw / 2.0),
                    fmt_sig(y - 4.0)
                );
                let _ = writeln!(
                    s,
                    "    <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                    fmt_sig(bx + bw / 2.0),
                    BOTTOM + 15.0,
                    Group::ALL[gi].as_str()
                );
            }
            let _ = writeln!(s, "  </g>");
        }
        s.push_str("</svg>\n");
        s
    }
}
