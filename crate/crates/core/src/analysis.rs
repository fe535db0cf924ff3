//! Structural analysis: degree distribution with a log-log power-law fit,
//! exact diameter of the largest component, and effective retrieval depth.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tracing::warn;

use crate::graph::{LifeGraph, NodeId};
use crate::media::MediaStore;
use crate::model::{fan_out, ChatModel};
use crate::retrieval::{Query, RetrievalConfig, Retriever};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("power-law fit needs at least 3 distinct positive degrees, found {0}")]
    TooFewPoints(usize),
}

/// Undirected degree → number of nodes with that degree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct DegreeHistogram(pub BTreeMap<usize, usize>);

impl DegreeHistogram {
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    /// Two whitespace-separated columns, gnuplot-ready.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# degree frequency\n");
        for (d, c) in &self.0 {
            let _ = writeln!(out, "{d} {c}");
        }
        out
    }
}

impl FromIterator<(usize, usize)> for DegreeHistogram {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// In + out degree of every node, parallel edges counted.
pub fn degree_histogram(graph: &LifeGraph) -> DegreeHistogram {
    let mut h = BTreeMap::new();
    for n in graph.nodes() {
        *h.entry(graph.degree(&n.id)).or_insert(0) += 1;
    }
    DegreeHistogram(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Negated slope of log(frequency) against log(degree).
    pub exponent: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares on (ln degree, ln frequency). Degree 0 and empty
/// bins are left out since their logarithm is undefined.
pub fn powerlaw_fit(hist: &DegreeHistogram) -> Result<PowerLawFit, AnalysisError> {
    fit_frequencies(hist.0.iter().map(|(&d, &c)| (d as f64, c as f64)))
}

/// As [`powerlaw_fit`], over real-valued (degree, frequency) pairs.
pub fn fit_frequencies(points: impl IntoIterator<Item = (f64, f64)>) -> Result<PowerLawFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(d, c)| d > 0.0 && c > 0.0)
        .map(|(d, c)| (d.ln(), c.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    // A flat, exactly fitted line has no variance to explain.
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        exponent: -slope,
        r_squared,
        points: pts.len(),
    })
}

struct Indexed<'g> {
    ids: Vec<&'g NodeId>,
    adj: Vec<Vec<usize>>,
}

fn index(graph: &LifeGraph) -> Indexed<'_> {
    let ids: Vec<&NodeId> = graph.nodes().map(|n| &n.id).collect();
    let pos: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut adj = vec![Vec::new(); ids.len()];
    for e in graph.edges() {
        let (a, b) = (pos[&e.subject], pos[&e.object]);
        adj[a].push(b);
        adj[b].push(a);
    }
    Indexed { ids, adj }
}

fn bfs_eccentricity(adj: &[Vec<usize>], from: usize) -> usize {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[from] = 0;
    let mut q = VecDeque::from([from]);
    let mut far = 0;
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                far = far.max(dist[v]);
                q.push_back(v);
            }
        }
    }
    far
}

/// Connected components of the undirected view, largest first; equal sizes
/// are ordered by their smallest node id.
pub fn components(graph: &LifeGraph) -> Vec<Vec<NodeId>> {
    let ix = index(graph);
    let mut seen = vec![false; ix.ids.len()];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..ix.ids.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            for &v in &ix.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    q.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    // Stable sort keeps discovery order (= smallest id first) among equals.
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    comps
        .into_iter()
        .map(|c| c.into_iter().map(|i| ix.ids[i].clone()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiameterReport {
    pub diameter: usize,
    /// Sizes of all components, largest first; the diameter is measured on
    /// the first.
    pub component_sizes: Vec<usize>,
}

/// Exact diameter of the largest component by BFS from every node of it.
pub fn diameter_report(graph: &LifeGraph) -> DiameterReport {
    let comps = components(graph);
    let component_sizes: Vec<usize> = comps.iter().map(Vec::len).collect();
    let Some(largest) = comps.first() else {
        return DiameterReport {
            diameter: 0,
            component_sizes,
        };
    };
    let ix = index(graph);
    let pos: BTreeMap<&NodeId, usize> = ix.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let members: Vec<usize> = largest.iter().map(|id| pos[id]).collect();
    let diameter = members
        .par_iter()
        .map(|&u| bfs_eccentricity(&ix.adj, u))
        .max()
        .unwrap_or(0);
    DiameterReport {
        diameter,
        component_sizes,
    }
}

pub fn diameter(graph: &LifeGraph) -> usize {
    diameter_report(graph).diameter
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthStats {
    pub limit: usize,
    pub mean: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Mean effective depth per depth limit over `queries`. Failed runs are
/// excluded from the mean and counted.
pub fn effective_depth_stats(
    graph: &LifeGraph,
    queries: &[Query],
    limits: &[usize],
    base: &RetrievalConfig,
    model: &dyn ChatModel,
    media: Option<&dyn MediaStore>,
) -> Vec<DepthStats> {
    limits
        .iter()
        .map(|&limit| {
            let config = RetrievalConfig {
                depth: limit,
                ..base.clone()
            };
            let depths = fan_out(queries, model.max_parallelism(), |q| {
                let mut r = Retriever::new(graph, model).with_config(config.clone());
                if let Some(m) = media {
                    r = r.with_media(m);
                }
                r.retrieve(q).map(|c| c.effective_depth)
            });
            let mut sum = 0usize;
            let mut runs = 0usize;
            let mut failures = 0usize;
            for d in depths {
                match d {
                    Ok(d) => {
                        sum += d;
                        runs += 1;
                    }
                    Err(e) => {
                        warn!(limit, error = %e, "retrieval failed during depth sweep");
                        failures += 1;
                    }
                }
            }
            DepthStats {
                limit,
                mean: if runs > 0 { sum as f64 / runs as f64 } else { 0.0 },
                runs,
                failures,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub owner: String,
    pub nodes: usize,
    pub edges: usize,
    pub diameter: usize,
    pub component_sizes: Vec<usize>,
    pub powerlaw_exponent: Option<f64>,
    pub powerlaw_r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powerlaw_error: Option<String>,
    pub degree_histogram: DegreeHistogram,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub effective_depth: Vec<DepthStats>,
}

pub fn structure_report(graph: &LifeGraph) -> StructureReport {
    let hist = degree_histogram(graph);
    let dia = diameter_report(graph);
    let (exp, r2, err) = match powerlaw_fit(&hist) {
        Ok(f) => (Some(f.exponent), Some(f.r_squared), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    StructureReport {
        owner: graph.owner().to_string(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        diameter: dia.diameter,
        component_sizes: dia.component_sizes,
        powerlaw_exponent: exp,
        powerlaw_r_squared: r2,
        powerlaw_error: err,
        degree_histogram: hist,
        effective_depth: Vec::new(),
    }
}
