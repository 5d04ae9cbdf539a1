//! Per-period all-communication network and total degree centrality.
//!
//! Nodes are the accounts that authored at least one tweet in the period.
//! Every retweet and every mention is a directed edge from the author to the
//! referenced account; parallel edges are kept so degrees count interactions,
//! not distinct neighbours. Self-loops and edges to accounts that did not
//! tweet in the period are dropped and tallied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Period, Tweet};
use crate::table::fmt_sig;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("tweet `{tweet_id}` is not in period `{period}`")]
    WrongPeriod { tweet_id: String, period: String },
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unsupported export format `{0}` (expected dot or gexf)")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Retweet,
    Mention,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Retweet => "retweet",
            EdgeKind::Mention => "mention",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Degree {
    pub in_count: u64,
    pub out_count: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DropStats {
    pub non_author_target: u64,
    pub self_loop: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommNetwork {
    pub period: String,
    pub nodes: BTreeSet<String>,
    pub edges: Vec<Edge>,
    pub degrees: BTreeMap<String, Degree>,
    pub dropped: DropStats,
}

impl CommNetwork {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Builds the network for one period from that period's tweets.
pub fn build_network<'a, I>(tweets: I, period: &Period) -> Result<CommNetwork, GraphError>
where
    I: IntoIterator<Item = &'a Tweet>,
{
    let tweets: Vec<&Tweet> = tweets.into_iter().collect();
    for t in &tweets {
        let date = t.created_at.date_naive();
        if date < period.start || date > period.end {
            return Err(GraphError::WrongPeriod { tweet_id: t.tweet_id.clone(), period: period.label.clone() });
        }
    }
    let nodes: BTreeSet<String> = tweets.iter().map(|t| t.author_id.clone()).collect();
    let mut degrees: BTreeMap<String, Degree> = nodes.iter().map(|n| (n.clone(), Degree::default())).collect();
    let mut edges = Vec::new();
    let mut dropped = DropStats::default();

    for t in &tweets {
        let retweet = t.retweeted_author_id.iter().map(|id| (id, EdgeKind::Retweet));
        let mentions = t.mentioned_author_ids.iter().map(|id| (id, EdgeKind::Mention));
        for (target, kind) in retweet.chain(mentions) {
            if *target == t.author_id {
                dropped.self_loop += 1;
                continue;
            }
            if !nodes.contains(target) {
                dropped.non_author_target += 1;
                continue;
            }
            degrees.get_mut(&t.author_id).expect("author is a node").out_count += 1;
            degrees.get_mut(target).expect("target is a node").in_count += 1;
            edges.push(Edge { source: t.author_id.clone(), target: target.clone(), kind });
        }
    }
    for d in degrees.values_mut() {
        d.total = d.in_count + d.out_count;
    }
    Ok(CommNetwork { period: period.label.clone(), nodes, edges, degrees, dropped })
}

pub fn total_degree(network: &CommNetwork, user_id: &str) -> Result<u64, GraphError> {
    network
        .degrees
        .get(user_id)
        .map(|d| d.total)
        .ok_or_else(|| GraphError::UnknownUser(user_id.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Gexf,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::Gexf => "gexf",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "gexf" => Ok(ExportFormat::Gexf),
            other => Err(GraphError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Node styling carried into exports: bot accounts are coloured apart and
/// nodes are sized by the mean retweet count of their tweets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeAttributes {
    pub is_bot: bool,
    pub mean_retweet_count: f64,
}

/// Mean retweet count per author over the given tweets, with bot flags.
pub fn node_attributes<'a, I, F>(tweets: I, is_bot: F) -> BTreeMap<String, NodeAttributes>
where
    I: IntoIterator<Item = &'a Tweet>,
    F: Fn(&str) -> bool,
{
    let mut sums: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for t in tweets {
        let e = sums.entry(t.author_id.as_str()).or_default();
        e.0 += t.retweet_count;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(id, (sum, n))| {
            (id.to_string(), NodeAttributes { is_bot: is_bot(id), mean_retweet_count: sum as f64 / n as f64 })
        })
        .collect()
}

pub fn export_network(
    network: &CommNetwork,
    attributes: &BTreeMap<String, NodeAttributes>,
    format: ExportFormat,
) -> Vec<u8> {
    let mut edges: Vec<&Edge> = network.edges.iter().collect();
    edges.sort();
    let out = match format {
        ExportFormat::Dot => to_dot(network, attributes, &edges),
        ExportFormat::Gexf => to_gexf(network, attributes, &edges),
    };
    out.into_bytes()
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(network: &CommNetwork, attributes: &BTreeMap<String, NodeAttributes>, edges: &[&Edge]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph {} {{", dot_quote(&network.period));
    for node in &network.nodes {
        let a = attributes.get(node).copied().unwrap_or_default();
        let total = network.degrees[node].total;
        let _ = writeln!(
            s,
            "  {} [is_bot={}, mean_retweet_count={}, total_degree={}];",
            dot_quote(node),
            u8::from(a.is_bot),
            fmt_sig(a.mean_retweet_count),
            total
        );
    }
    for e in edges {
        let _ = writeln!(s, "  {} -> {} [kind={}];", dot_quote(&e.source), dot_quote(&e.target), e.kind.as_str());
    }
    s.push_str("}\n");
    s
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn to_gexf(network: &CommNetwork, attributes: &BTreeMap<String, NodeAttributes>, edges: &[&Edge]) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<gexf xmlns=\"http://gexf.net/1.3\" version=\"1.3\">\n");
    let _ = writeln!(s, "  <meta>\n    <description>{}</description>\n  </meta>", xml_escape(&network.period));
    s.push_str("  <graph mode=\"static\" defaultedgetype=\"directed\">\n");
    s.push_str("    <attributes class=\"node\">\n");
    s.push_str("      <attribute id=\"0\" title=\"is_bot\" type=\"integer\"/>\n");
    s.push_str("      <attribute id=\"1\" title=\"mean_retweet_count\" type=\"double\"/>\n");
    s.push_str("      <attribute id=\"2\" title=\"total_degree\" type=\"integer\"/>\n");
    s.push_str("    </attributes>\n");
    s.push_str("    <attributes class=\"edge\">\n");
    s.push_str("      <attribute id=\"0\" title=\"kind\" type=\"string\"/>\n");
    s.push_str("    </attributes>\n");
    s.push_str("    <nodes>\n");
    for node in &network.nodes {
        let a = attributes.get(node).copied().unwrap_or_default();
        let id = xml_escape(node);
        let _ = writeln!(s, "      <node id=\"{id}\" label=\"{id}\">");
        s.push_str("        <attvalues>\n");
        let _ = writeln!(s, "          <attvalue for=\"0\" value=\"{}\"/>", u8::from(a.is_bot));
        let _ = writeln!(s, "          <attvalue for=\"1\" value=\"{}\"/>", fmt_sig(a.mean_retweet_count));
        let _ = writeln!(s, "          <attvalue for=\"2\" value=\"{}\"/>", network.degrees[node].total);
        s.push_str("        </attvalues>\n");
        s.push_str("      </node>\n");
    }
    s.push_str("    </nodes>\n");
    s.push_str("    <edges>\n");
    for (i, e) in edges.iter().enumerate() {
        let _ = writeln!(
            s,
            "      <edge id=\"{i}\" source=\"{}\" target=\"{}\">",
            xml_escape(&e.source),
            xml_escape(&e.target)
        );
        let _ = writeln!(
            s,
            "        <attvalues>\n          <attvalue for=\"0\" value=\"{}\"/>\n        </attvalues>",
            e.kind.as_str()
        );
        s.push_str("      </edge>\n");
    }
    s.push_str("    </edges>\n");
    s.push_str("  </graph>\n");
    s.push_str("</gexf>\n");
    s
}
