//! Activation-annotated SNN workload graphs and Kernighan–Lin partitioning
//! into crossbar-sized clusters.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NeuroError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub src: u64,
    pub dst: u64,
    #[serde(default)]
    pub weight: f64,
    /// Writes or spikes per workload window.
    pub activation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnWorkloadGraph {
    pub neurons: Vec<u64>,
    pub synapses: Vec<Synapse>,
}

impl SnnWorkloadGraph {
    pub fn from_json(text: &str) -> Result<Self, NeuroError> {
        let g: Self = serde_json::from_str(text).map_err(|e| NeuroError::Workload(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<(), NeuroError> {
        let index = self.try_index()?;
        for (k, s) in self.synapses.iter().enumerate() {
            for end in [s.src, s.dst] {
                if !index.contains_key(&end) {
                    return Err(NeuroError::Workload(format!("synapse {k} references unknown neuron {end}")));
                }
            }
            if s.src == s.dst {
                return Err(NeuroError::Workload(format!("synapse {k} is a self-loop on neuron {}", s.src)));
            }
        }
        Ok(())
    }

    fn try_index(&self) -> Result<HashMap<u64, usize>, NeuroError> {
        let mut index = HashMap::with_capacity(self.neurons.len());
        for (i, &id) in self.neurons.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(NeuroError::Workload(format!("duplicate neuron id {id}")));
            }
        }
        Ok(index)
    }

    /// Synapse endpoints as neuron positions.
    pub fn edges(&self) -> Result<Vec<(usize, usize)>, NeuroError> {
        self.validate()?;
        let index = self.try_index()?;
        Ok(self.synapses.iter().map(|s| (index[&s.src], index[&s.dst])).collect())
    }

    pub fn total_activation(&self) -> u64 {
        self.synapses.iter().map(|s| s.activation).sum()
    }
}

/// Uniform random directed graph; activations uniform in `0..=max_activation`.
pub fn random_workload(neurons: usize, synapses: usize, max_activation: u64, seed: u64) -> SnnWorkloadGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synapses = if neurons < 2 {
        Vec::new()
    } else {
        (0..synapses)
            .map(|_| {
                let src = rng.random_range(0..neurons);
                let mut dst = rng.random_range(0..neurons - 1);
                if dst >= src {
                    dst += 1;
                }
                Synapse {
                    src: src as u64,
                    dst: dst as u64,
                    weight: rng.random_range(-1.0..1.0),
                    activation: rng.random_range(0..=max_activation),
                }
            })
            .collect()
    };
    SnnWorkloadGraph { neurons: (0..neurons as u64).collect(), synapses }
}

/// Disjoint neuron clusters (positions into `neurons`), each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    /// Total activation on synapses between different clusters.
    pub cut: u64,
}

impl Clustering {
    /// Cluster of every neuron.
    pub fn labels(&self, neurons: usize) -> Vec<usize> {
        let mut of = vec![usize::MAX; neurons];
        for (c, members) in self.clusters.iter().enumerate() {
            for &v in members {
                of[v] = c;
            }
        }
        of
    }
}

pub fn cut_cost(graph: &SnnWorkloadGraph, labels: &[usize]) -> Result<u64, NeuroError> {
    let edges = graph.edges()?;
    Ok(edges
        .iter()
        .zip(&graph.synapses)
        .filter(|((a, b), _)| labels[*a] != labels[*b])
        .map(|(_, s)| s.activation)
        .sum())
}

/// Undirected activation weights, adjacency sorted by neighbour.
fn undirected(n: usize, edges: &[(usize, usize)], graph: &SnnWorkloadGraph) -> Vec<Vec<(usize, i64)>> {
    let mut maps: Vec<HashMap<usize, i64>> = vec![HashMap::new(); n];
    for (&(a, b), s) in edges.iter().zip(&graph.synapses) {
        *maps[a].entry(b).or_default() += s.activation as i64;
        *maps[b].entry(a).or_default() += s.activation as i64;
    }
    maps.into_iter()
        .map(|m| {
            let mut v: Vec<(usize, i64)> = m.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect()
}

fn weight(adj: &[Vec<(usize, i64)>], a: usize, b: usize) -> i64 {
    adj[a].binary_search_by_key(&b, |e| e.0).map_or(0, |k| adj[a][k].1)
}

const KL_RESTARTS: usize = 4;
const KL_MAX_PASSES: usize = 64;
/// Above this many candidate pairs only the best-gain vertices of each side
/// are paired.
const FULL_SCAN_PAIRS: usize = 4096;
const SHORTLIST: usize = 16;

/// Balanced bipartition of `vs` (sizes `⌈n/2⌉`, `⌊n/2⌋`) minimising the
/// cut weight, best of several seeded KL runs.
fn bisect(vs: &[usize], adj: &[Vec<(usize, i64)>], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = vs.len();
    let local: HashMap<usize, usize> = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let ladj: Vec<Vec<(usize, i64)>> = vs
        .iter()
        .map(|&v| adj[v].iter().filter_map(|&(u, w)| local.get(&u).map(|&l| (l, w))).collect())
        .collect();
    let mut best: Option<(i64, Vec<bool>)> = None;
    for _ in 0..KL_RESTARTS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut side = vec![false; n];
        for &v in &order[..n.div_ceil(2)] {
            side[v] = true;
        }
        kl_refine(&ladj, &mut side);
        let cut = local_cut(&ladj, &side);
        if best.as_ref().is_none_or(|(c, _)| cut < *c) {
            best = Some((cut, side));
        }
    }
    let (_, side) = best.expect("at least one restart");
    let a = (0..n).filter(|&i| side[i]).map(|i| vs[i]).collect();
    let b = (0..n).filter(|&i| !side[i]).map(|i| vs[i]).collect();
    (a, b)
}

fn local_cut(adj: &[Vec<(usize, i64)>], side: &[bool]) -> i64 {
    let mut cut = 0;
    for (a, nb) in adj.iter().enumerate() {
        for &(b, w) in nb {
            if a < b && side[a] != side[b] {
                cut += w;
            }
        }
    }
    cut
}

/// Kernighan–Lin passes: tentatively swap the best pair repeatedly, keep
/// the best prefix of swaps, stop when a pass gains nothing.
fn kl_refine(adj: &[Vec<(usize, i64)>], side: &mut [bool]) {
    let n = side.len();
    for _ in 0..KL_MAX_PASSES {
        let mut d: Vec<i64> = (0..n)
            .map(|v| adj[v].iter().map(|&(u, w)| if side[u] != side[v] { w } else { -w }).sum())
            .collect();
        let mut locked = vec![false; n];
        let mut swaps = Vec::new();
        let mut gains = Vec::new();
        let steps = side.iter().filter(|&&s| s).count().min(side.iter().filter(|&&s| !s).count());
        for _ in 0..steps {
            let free = |s: bool| -> Vec<usize> { (0..n).filter(|&v| !locked[v] && side[v] == s).collect() };
            let (mut fa, mut fb) = (free(true), free(false));
            if fa.len() * fb.len() > FULL_SCAN_PAIRS {
                for f in [&mut fa, &mut fb] {
                    f.sort_by_key(|&v| (std::cmp::Reverse(d[v]), v));
                    f.truncate(SHORTLIST);
                }
            }
            let mut pick: Option<(i64, usize, usize)> = None;
            for &a in &fa {
                for &b in &fb {
                    let g = d[a] + d[b] - 2 * weight(adj, a, b);
                    if pick.is_none_or(|(pg, _, _)| g > pg) {
                        pick = Some((g, a, b));
                    }
                }
            }
            let Some((g, a, b)) = pick else { break };
            locked[a] = true;
            locked[b] = true;
            // gains of the remaining free vertices after swapping a and b
            for x in [a, b] {
                for &(u, w) in &adj[x] {
                    if !locked[u] {
                        d[u] += if side[u] == side[x] { 2 * w } else { -2 * w };
                    }
                }
            }
            swaps.push((a, b));
            gains.push(g);
        }
        let (mut best_k, mut best_g, mut run) = (0, 0i64, 0i64);
        for (k, g) in gains.iter().enumerate() {
            run += g;
            if run > best_g {
                best_g = run;
                best_k = k + 1;
            }
        }
        if best_k == 0 {
            return;
        }
        for &(a, b) in &swaps[..best_k] {
            side[a] = !side[a];
            side[b] = !side[b];
        }
    }
}

/// One KL bisection of the whole graph.
pub fn kl_bisect(graph: &SnnWorkloadGraph, seed: u64) -> Result<Clustering, NeuroError> {
    let edges = graph.edges()?;
    if graph.neurons.is_empty() {
        return Err(NeuroError::Workload("no neurons".into()));
    }
    let adj = undirected(graph.neurons.len(), &edges, graph);
    let all: Vec<usize> = (0..graph.neurons.len()).collect();
    let (mut a, mut b) = bisect(&all, &adj, &mut ChaCha8Rng::seed_from_u64(seed));
    a.sort_unstable();
    b.sort_unstable();
    finish(graph, vec![a, b])
}

fn finish(graph: &SnnWorkloadGraph, mut clusters: Vec<Vec<usize>>) -> Result<Clustering, NeuroError> {
    clusters.retain(|c| !c.is_empty());
    clusters.sort();
    let mut c = Clustering { clusters, cut: 0 };
    c.cut = cut_cost(graph, &c.labels(graph.neurons.len()))?;
    Ok(c)
}

/// Recursive KL bisection until every cluster holds at most `capacity`
/// neurons.
pub fn kl_partition(graph: &SnnWorkloadGraph, capacity: usize, seed: u64) -> Result<Clustering, NeuroError> {
    let edges = graph.edges()?;
    if graph.neurons.is_empty() {
        return Err(NeuroError::Workload("no neurons".into()));
    }
    if capacity == 0 {
        return Err(NeuroError::Capacity { capacity, what: "a single neuron".into() });
    }
    let adj = undirected(graph.neurons.len(), &edges, graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pending = vec![(0..graph.neurons.len()).collect::<Vec<usize>>()];
    let mut done = Vec::new();
    while let Some(vs) = pending.pop() {
        if vs.len() <= capacity {
            done.push(vs);
        } else {
            let (mut a, mut b) = bisect(&vs, &adj, &mut rng);
            a.sort_unstable();
            b.sort_unstable();
            pending.push(b);
            pending.push(a);
        }
    }
    finish(graph, done)
}
