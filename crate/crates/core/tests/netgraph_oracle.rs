mod common;

use std::collections::{BTreeMap, BTreeSet};

use appeal_scope::corpus::Tweet;
use appeal_scope::netgraph::{build_network, export_network, ExportFormat, NodeAttributes};

use common::{naive_degrees, random_tweets, week_period};

#[test]
fn degrees_match_naive_recount_on_random_corpora() {
    let mut saw_parallel = false;
    let mut saw_self = false;
    let mut saw_outside = false;
    for seed in 0..100u64 {
        let tweets = random_tweets(seed);
        let refs: Vec<&Tweet> = tweets.iter().collect();
        let net = build_network(&tweets, &week_period()).unwrap();
        let oracle = naive_degrees(&refs);
        assert_eq!(net.degrees.len(), oracle.len(), "seed {seed}");
        for (user, (in_c, out_c)) in &oracle {
            let d = net.degrees[user];
            assert_eq!((d.in_count, d.out_count, d.total), (*in_c, *out_c, in_c + out_c), "seed {seed} user {user}");
        }
        let sum: u64 = net.degrees.values().map(|d| d.total).sum();
        assert_eq!(sum, 2 * net.edge_count() as u64, "handshake, seed {seed}");

        let pairs: Vec<(&str, &str)> = net.edges.iter().map(|e| (e.source.as_str(), e.target.as_str())).collect();
        saw_parallel |= pairs.len() > pairs.iter().collect::<BTreeSet<_>>().len();
        saw_self |= net.dropped.self_loop > 0;
        saw_outside |= net.dropped.non_author_target > 0;
        assert!(net.edges.iter().all(|e| e.source != e.target && net.nodes.contains(&e.target)));
    }
    assert!(saw_parallel && saw_self && saw_outside, "generator must exercise every edge case");
}

fn unquote(s: &str) -> String {
    s.trim().trim_matches('"').replace("\\\"", "\"").replace("\\\\", "\\")
}

fn xml_attr(line: &str, name: &str) -> Option<String> {
    let key = format!("{name}=\"");
    let start = line.find(&key)? + key.len();
    let len = line[start..].find('"')?;
    Some(line[start..start + len].replace("&quot;", "\"").replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&"))
}

fn edge_multiset<'a>(pairs: impl Iterator<Item = (String, String)> + 'a) -> BTreeMap<(String, String), usize> {
    let mut out = BTreeMap::new();
    for p in pairs {
        *out.entry(p).or_insert(0) += 1;
    }
    out
}

#[test]
fn exports_reparse_to_the_same_multigraph() {
    for seed in [3u64, 17, 42] {
        let tweets = random_tweets(seed);
        let net = build_network(&tweets, &week_period()).unwrap();
        let attrs: BTreeMap<String, NodeAttributes> = BTreeMap::new();
        let expected = edge_multiset(net.edges.iter().map(|e| (e.source.clone(), e.target.clone())));

        let dot = String::from_utf8(export_network(&net, &attrs, ExportFormat::Dot)).unwrap();
        let mut dot_nodes = BTreeSet::new();
        let mut dot_edges = Vec::new();
        for line in dot.lines().map(str::trim) {
            let Some(body) = line.strip_suffix("];") else { continue };
            let (head, _) = body.split_once('[').unwrap();
            match head.split_once("->") {
                Some((s, t)) => dot_edges.push((unquote(s), unquote(t))),
                None => {
                    dot_nodes.insert(unquote(head));
                }
            }
        }
        assert_eq!(dot_nodes, net.nodes, "seed {seed}");
        assert_eq!(edge_multiset(dot_edges.into_iter()), expected, "seed {seed}");

        let gexf = String::from_utf8(export_network(&net, &attrs, ExportFormat::Gexf)).unwrap();
        let gexf_nodes: BTreeSet<String> =
            gexf.lines().filter(|l| l.trim_start().starts_with("<node ")).filter_map(|l| xml_attr(l, "id")).collect();
        let gexf_edges = gexf
            .lines()
            .filter(|l| l.trim_start().starts_with("<edge "))
            .map(|l| (xml_attr(l, "source").unwrap(), xml_attr(l, "target").unwrap()));
        assert_eq!(gexf_nodes, net.nodes, "seed {seed}");
        assert_eq!(edge_multiset(gexf_edges), expected, "seed {seed}");
    }
}
