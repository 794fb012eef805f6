//! Retweet cascades: edgelist construction, BFS reconstruction and metrics.
//!
//! Only retweets contribute edges; the parent of a retweet is its `ref_id`.
//! Children are visited in `(created_at, tweet_id)` order, so node and edge
//! lists are deterministic for a given corpus.

mod metrics;

pub use metrics::{
    cascades_per_user, metrics, velocity_curve, write_authorship_csv, write_ccdf_csv, write_velocity_csv,
    Authorship, CascadeMetrics, CohortReport, SizeDistribution, VelocityPoint, DEFAULT_KS,
};

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::{RefKind, TweetRecord};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub child_id: String,
    pub parent_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CascadeNode {
    pub tweet_id: String,
    pub author_id: Option<String>,
    pub created_at: i64,
}

/// A rooted retweet tree. `nodes[0]` is the root; nodes and edges are in
/// BFS discovery order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    pub root_id: String,
    pub nodes: Vec<CascadeNode>,
    pub edges: Vec<Edge>,
    /// Children timestamped before their parent. Kept in the tree.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub time_violations: Vec<String>,
}

impl Cascade {
    pub fn singleton(node: CascadeNode) -> Self {
        Cascade {
            root_id: node.tweet_id.clone(),
            nodes: vec![node],
            edges: Vec::new(),
            time_violations: Vec::new(),
        }
    }

    pub fn root(&self) -> &CascadeNode {
        &self.nodes[0]
    }

    /// Order-independent form (sorted nodes and edges) for topology comparisons.
    pub fn canonical(&self) -> (String, Vec<CascadeNode>, Vec<Edge>) {
        let mut nodes = self.nodes.clone();
        nodes.sort();
        let mut edges = self.edges.clone();
        edges.sort();
        (self.root_id.clone(), nodes, edges)
    }

    /// Structural tree check: `|E| = |V| - 1`, unique nodes, every edge's
    /// parent precedes its child, and everything hangs off the root.
    pub fn is_tree(&self) -> bool {
        if self.nodes.is_empty() || self.nodes[0].tweet_id != self.root_id || self.edges.len() + 1 != self.nodes.len() {
            return false;
        }
        let mut reached: HashSet<&str> = HashSet::from([self.root_id.as_str()]);
        let ids: HashSet<&str> = self.nodes.iter().map(|n| n.tweet_id.as_str()).collect();
        if ids.len() != self.nodes.len() {
            return false;
        }
        for e in &self.edges {
            if !reached.contains(e.parent_id.as_str()) || !ids.contains(e.child_id.as_str()) || !reached.insert(&e.child_id) {
                return false;
            }
        }
        reached.len() == self.nodes.len()
    }
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("tweet {0} appears as a retweet child more than once")]
    DuplicateChild(String),
    #[error("tweet {0} retweets itself")]
    SelfLoop(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cascade document line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// One edge per retweet record, `child = retweet id`, `parent = ref_id`.
pub fn build_edgelist(records: &[TweetRecord]) -> Result<Vec<Edge>, CascadeError> {
    build_edgelist_with(Exec::default(), records)
}

pub fn build_edgelist_with(exec: Exec, records: &[TweetRecord]) -> Result<Vec<Edge>, CascadeError> {
    let candidates = exec.map(records, |r| match (r.ref_kind, &r.ref_id) {
        (RefKind::Retweet, Some(parent)) => Some(Edge {
            child_id: r.id.clone(),
            parent_id: parent.clone(),
        }),
        _ => None,
    });
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for e in candidates.into_iter().flatten() {
        if e.child_id == e.parent_id {
            return Err(CascadeError::SelfLoop(e.child_id));
        }
        if !seen.insert(e.child_id.clone()) {
            return Err(CascadeError::DuplicateChild(e.child_id));
        }
        edges.push(e);
    }
    Ok(edges)
}

#[derive(Debug, Default)]
pub struct Reconstruction {
    /// One cascade per root found in the corpus, in root order.
    pub cascades: Vec<Cascade>,
    /// Edges whose parent or child is absent from the corpus.
    pub dropped_edges: usize,
    /// Requested roots with no matching record.
    pub missing_roots: Vec<String>,
}

pub fn reconstruct(roots: &[String], edges: &[Edge], records: &[TweetRecord]) -> Reconstruction {
    reconstruct_with(Exec::default(), roots, edges, records)
}

/// Breadth-first search from every root. Searches are independent and run
/// through `exec`; the output is identical in either mode.
pub fn reconstruct_with(exec: Exec, roots: &[String], edges: &[Edge], records: &[TweetRecord]) -> Reconstruction {
    let by_id: HashMap<&str, &TweetRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut children: HashMap<&str, Vec<&TweetRecord>> = HashMap::new();
    let mut dropped = 0;
    for e in edges {
        match (by_id.get(e.parent_id.as_str()), by_id.get(e.child_id.as_str())) {
            (Some(p), Some(c)) => children.entry(p.id.as_str()).or_default().push(c),
            _ => dropped += 1,
        }
    }
    for kids in children.values_mut() {
        kids.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    }

    let node = |r: &TweetRecord| CascadeNode {
        tweet_id: r.id.clone(),
        author_id: r.author_id.clone(),
        created_at: r.created_at,
    };
    let found = exec.map(roots, |root_id| {
        let root = by_id.get(root_id.as_str())?;
        let mut cascade = Cascade::singleton(node(root));
        let mut visited: HashSet<&str> = HashSet::from([root.id.as_str()]);
        let mut queue = VecDeque::from([*root]);
        while let Some(parent) = queue.pop_front() {
            for &child in children.get(parent.id.as_str()).into_iter().flatten() {
                if !visited.insert(child.id.as_str()) {
                    continue;
                }
                if child.created_at < parent.created_at {
                    cascade.time_violations.push(child.id.clone());
                }
                cascade.nodes.push(node(child));
                cascade.edges.push(Edge {
                    child_id: child.id.clone(),
                    parent_id: parent.id.clone(),
                });
                queue.push_back(child);
            }
        }
        Some(cascade)
    });

    let mut out = Reconstruction {
        dropped_edges: dropped,
        ..Default::default()
    };
    for (root, c) in roots.iter().zip(found) {
        match c {
            Some(c) => out.cascades.push(c),
            None => out.missing_roots.push(root.clone()),
        }
    }
    out
}

/// CSV `child_id,parent_id`.
pub fn write_edgelist<W: Write>(out: W, edges: &[Edge]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["child_id", "parent_id"])?;
    for e in edges {
        w.write_record([&e.child_id, &e.parent_id])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edgelist<R: Read>(input: R) -> csv::Result<Vec<Edge>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// One JSON document per line per cascade.
pub fn write_cascades<W: Write>(mut out: W, cascades: &[Cascade]) -> Result<(), CascadeError> {
    for c in cascades {
        serde_json::to_writer(&mut out, c).map_err(|source| CascadeError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_cascades<R: BufRead>(input: R) -> Result<Vec<Cascade>, CascadeError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CascadeError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orig(id: &str, t: i64) -> TweetRecord {
        TweetRecord::original(id, Some(id), t, "")
    }

    fn rt(id: &str, parent: &str, t: i64) -> TweetRecord {
        TweetRecord::referencing(id, Some(id), t, "", RefKind::Retweet, parent)
    }

    #[test]
    fn edgelist_only_retweets() {
        assert!(build_edgelist(&[orig("t0", 0)]).unwrap().is_empty());
        let recs = vec![
            orig("t0", 0),
            rt("rt1", "t0", 1),
            TweetRecord::referencing("r", None, 2, "", RefKind::Reply, "t0"),
            TweetRecord::referencing("q", None, 2, "", RefKind::Quote, "t0"),
            TweetRecord::referencing("m", None, 2, "", RefKind::Mention, "t0"),
            rt("rt2", "rt1", 3),
        ];
        let e = build_edgelist(&recs).unwrap();
        assert_eq!(
            e,
            vec![
                Edge { child_id: "rt1".into(), parent_id: "t0".into() },
                Edge { child_id: "rt2".into(), parent_id: "rt1".into() },
            ]
        );
    }

    #[test]
    fn edgelist_errors() {
        assert!(matches!(build_edgelist(&[rt("a", "a", 0)]), Err(CascadeError::SelfLoop(_))));
        assert!(matches!(
            build_edgelist(&[rt("a", "b", 0), rt("a", "c", 0)]),
            Err(CascadeError::DuplicateChild(_))
        ));
    }

    #[test]
    fn singleton_and_chain() {
        let recs = vec![orig("t0", 0), rt("r1", "t0", 60_000), rt("r2", "r1", 120_000), orig("lonely", 5)];
        let e = build_edgelist(&recs).unwrap();
        let r = reconstruct(&["lonely".into(), "t0".into(), "ghost".into()], &e, &recs);
        assert_eq!(r.missing_roots, vec!["ghost"]);
        assert_eq!(r.cascades[0].nodes.len(), 1);
        assert_eq!(metrics(&r.cascades[0]).depth, 0);
        let chain = &r.cascades[1];
        assert_eq!(chain.nodes.len(), 3);
        assert_eq!(metrics(chain).depth, 2);
        assert!(chain.is_tree());
    }

    #[test]
    fn bfs_order_and_dangling() {
        let recs = vec![
            orig("root", 0),
            rt("b", "root", 20),
            rt("a", "root", 20),
            rt("c", "root", 10),
            rt("d", "a", 30),
            rt("orphan", "missing", 40),
            rt("e", "orphan", 50),
        ];
        let e = build_edgelist(&recs).unwrap();
        let r = reconstruct(&["root".into()], &e, &recs);
        assert_eq!(r.dropped_edges, 1);
        let ids: Vec<_> = r.cascades[0].nodes.iter().map(|n| n.tweet_id.as_str()).collect();
        assert_eq!(ids, vec!["root", "c", "a", "b", "d"]);
    }

    #[test]
    fn time_violation_flagged_not_fixed() {
        let recs = vec![orig("root", 100), rt("early", "root", 50)];
        let r = reconstruct(&["root".into()], &build_edgelist(&recs).unwrap(), &recs);
        assert_eq!(r.cascades[0].time_violations, vec!["early"]);
        assert_eq!(r.cascades[0].nodes.len(), 2);
    }

    #[test]
    fn cycles_do_not_hang() {
        let recs = vec![orig("root", 0), rt("x", "y", 1), rt("y", "x", 2)];
        let r = reconstruct(&["root".into(), "x".into()], &build_edgelist(&recs).unwrap(), &recs);
        assert_eq!(r.cascades[1].nodes.len(), 2);
    }

    #[test]
    fn io_round_trip() {
        let recs = vec![orig("t0", 0), rt("r1", "t0", 1)];
        let e = build_edgelist(&recs).unwrap();
        let mut buf = Vec::new();
        write_edgelist(&mut buf, &e).unwrap();
        assert_eq!(std::str::from_utf8(&buf).unwrap(), "child_id,parent_id\nr1,t0\n");
        assert_eq!(read_edgelist(buf.as_slice()).unwrap(), e);
        let c = reconstruct(&["t0".into()], &e, &recs).cascades;
        let mut buf = Vec::new();
        write_cascades(&mut buf, &c).unwrap();
        assert_eq!(read_cascades(buf.as_slice()).unwrap(), c);
    }
}
