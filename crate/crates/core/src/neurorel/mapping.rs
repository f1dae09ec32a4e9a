//! Aging-aware cluster-to-tile mapping with binary particle swarm
//! optimisation.
//!
//! Each tile carries several crossbars; a cluster occupies one crossbar of
//! the tile it is mapped to, and every synapse lives in the crossbar of its
//! destination neuron. A tile's utilization (duty) is its share of all
//! synapse activations. Busy crossbars heat the tile periphery, which
//! accelerates BTI; the system fitness sums per-tile failure rates
//! `duty / min(MTTF_tddb, MTTF_bti)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::aging::{mttf_bti, mttf_tddb, BtiParams, StressProfile, TddbParams};
use super::crossbar::{build_endurance_map, CrossbarConfig, EnduranceModel};
use super::placement::{effective_lifetime, place_random, place_synapses};
use super::workload::{kl_partition, Clustering, SnnWorkloadGraph};
use super::NeuroError;
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    /// Active periphery voltage (V).
    pub v_active: f64,
    /// Tile temperature with no busy crossbar (K).
    pub t_ambient: f64,
    /// Crossbars on the tile, i.e. clusters it can host.
    pub crossbars: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self { v_active: 3.0, t_ambient: 298.0, crossbars: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgingModel {
    pub tddb: TddbParams,
    pub bti: BtiParams,
    /// Temperature rise per busy crossbar (K).
    pub heating_per_crossbar: f64,
    /// When set, each MTTF is divided by its value under this stress, so
    /// both mechanisms read 1 at the nominal point.
    pub nominal: Option<StressProfile>,
    /// Weight of the inter-tile traffic term (fraction of activations
    /// crossing tiles); 0 leaves pure aging.
    pub cut_weight: f64,
}

impl Default for AgingModel {
    fn default() -> Self {
        Self {
            tddb: TddbParams::default(),
            bti: BtiParams::default(),
            heating_per_crossbar: 10.0,
            nominal: Some(StressProfile { v: 3.0, t: 298.0, duty: 1.0 }),
            cut_weight: 0.0,
        }
    }
}

/// Precomputed loads of one clustered workload on a set of tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingProblem {
    /// Share of all activations landing in each cluster.
    pub loads: Vec<f64>,
    /// `traffic[a][b]`: share of activations on synapses from cluster `a`
    /// to cluster `b`.
    pub traffic: Vec<Vec<f64>>,
    pub tiles: Vec<TileSpec>,
    pub model: AgingModel,
    norm: (f64, f64),
}

impl MappingProblem {
    pub fn new(
        graph: &SnnWorkloadGraph,
        clustering: &Clustering,
        tiles: Vec<TileSpec>,
        model: AgingModel,
    ) -> Result<Self, NeuroError> {
        let k = clustering.clusters.len();
        let labels = clustering.labels(graph.neurons.len());
        let total = graph.total_activation() as f64;
        let mut loads = vec![0.0; k];
        let mut traffic = vec![vec![0.0; k]; k];
        if total > 0.0 {
            for ((a, b), s) in graph.edges()?.into_iter().zip(&graph.synapses) {
                let share = s.activation as f64 / total;
                loads[labels[b]] += share;
                if labels[a] != labels[b] {
                    traffic[labels[a]][labels[b]] += share;
                }
            }
        }
        Self::from_loads(loads, traffic, tiles, model)
    }

    pub fn from_loads(
        loads: Vec<f64>,
        traffic: Vec<Vec<f64>>,
        tiles: Vec<TileSpec>,
        model: AgingModel,
    ) -> Result<Self, NeuroError> {
        if tiles.is_empty() {
            return Err(NeuroError::Mapping("no tiles".into()));
        }
        for t in &tiles {
            StressProfile { v: t.v_active, t: t.t_ambient, duty: 0.0 }.validate()?;
        }
        let slots: usize = tiles.iter().map(|t| t.crossbars).sum();
        if slots < loads.len() {
            return Err(NeuroError::Capacity { capacity: slots, what: format!("{} clusters", loads.len()) });
        }
        if loads.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(NeuroError::Mapping("cluster loads must be finite and non-negative".into()));
        }
        let norm = match model.nominal {
            Some(s) => {
                s.validate()?;
                (mttf_tddb(s.v, &model.tddb)?, mttf_bti(s.v, s.t, &model.bti)?)
            }
            None => (1.0, 1.0),
        };
        Ok(Self { loads, traffic, tiles, model, norm })
    }

    pub fn clusters(&self) -> usize {
        self.loads.len()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.tiles.iter().map(|t| t.crossbars).collect()
    }

    pub fn validate(&self, assignment: &[usize]) -> Result<(), NeuroError> {
        if assignment.len() != self.clusters() {
            return Err(NeuroError::Mapping(format!("{} tiles assigned to {} clusters", assignment.len(), self.clusters())));
        }
        let mut used = vec![0usize; self.tiles.len()];
        for (c, &t) in assignment.iter().enumerate() {
            if t >= self.tiles.len() {
                return Err(NeuroError::Mapping(format!("cluster {c} on missing tile {t}")));
            }
            used[t] += 1;
            if used[t] > self.tiles[t].crossbars {
                return Err(NeuroError::Mapping(format!("tile {t} holds more than {} clusters", self.tiles[t].crossbars)));
            }
        }
        Ok(())
    }

    /// MTTF of tile `t` with `busy` occupied crossbars.
    pub fn tile_mttf(&self, t: usize, busy: usize) -> f64 {
        let tile = &self.tiles[t];
        let temp = tile.t_ambient + self.model.heating_per_crossbar * busy as f64;
        let tddb = mttf_tddb(tile.v_active, &self.model.tddb).unwrap_or(0.0) / self.norm.0;
        let bti = mttf_bti(tile.v_active, temp, &self.model.bti).unwrap_or(0.0) / self.norm.1;
        tddb.min(bti)
    }

    /// Fitness of a valid assignment (lower is better).
    pub fn fitness(&self, assignment: &[usize]) -> f64 {
        let n = self.tiles.len();
        let (mut duty, mut busy) = (vec![0.0; n], vec![0usize; n]);
        for (c, &t) in assignment.iter().enumerate() {
            duty[t] += self.loads[c];
            busy[t] += 1;
        }
        let mut f: f64 = (0..n).filter(|&t| duty[t] > 0.0).map(|t| duty[t] / self.tile_mttf(t, busy[t])).sum();
        if self.model.cut_weight != 0.0 {
            let mut crossing = 0.0;
            for (a, row) in self.traffic.iter().enumerate() {
                for (b, share) in row.iter().enumerate() {
                    if assignment[a] != assignment[b] {
                        crossing += share;
                    }
                }
            }
            f += self.model.cut_weight * crossing;
        }
        f
    }
}

pub fn aging_fitness(problem: &MappingProblem, assignment: &[usize]) -> Result<f64, NeuroError> {
    problem.validate(assignment)?;
    Ok(problem.fitness(assignment))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_max: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self { particles: 20, iterations: 50, inertia: 0.7, c1: 1.5, c2: 1.5, v_max: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub assignment: Vec<usize>,
    pub fitness: f64,
    /// Global-best fitness after each iteration.
    pub trace: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Decodes one particle's bit matrix into a valid assignment: per cluster
/// the set bit with the highest velocity (or the highest-velocity tile if
/// none is set), moved to the highest-velocity tile with room when full.
fn repair(bits: &mut [Vec<bool>], vel: &[Vec<f64>], caps: &[usize]) -> Vec<usize> {
    let tiles = caps.len();
    let mut used = vec![0usize; tiles];
    let argmax = |c: usize, ok: &dyn Fn(usize) -> bool| -> Option<usize> {
        (0..tiles).filter(|&t| ok(t)).fold(None, |best: Option<usize>, t| match best {
            Some(b) if vel[c][b] >= vel[c][t] => Some(b),
            _ => Some(t),
        })
    };
    let mut out = Vec::with_capacity(bits.len());
    for c in 0..bits.len() {
        let pick = argmax(c, &|t| bits[c][t] && used[t] < caps[t])
            .or_else(|| argmax(c, &|t| used[t] < caps[t]))
            .expect("total capacity covers every cluster");
        used[pick] += 1;
        for t in 0..tiles {
            bits[c][t] = t == pick;
        }
        out.push(pick);
    }
    out
}

/// Binary PSO over one-hot cluster→tile matrices. `caps[t]` bounds the
/// clusters on tile `t`.
pub fn pso_map<F>(clusters: usize, caps: &[usize], fitness: F, cfg: &PsoConfig, seed: u64, exec: Exec) -> Result<PsoResult, NeuroError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if cfg.particles == 0 || cfg.iterations == 0 {
        return Err(NeuroError::EmptySwarm);
    }
    if caps.is_empty() || caps.iter().sum::<usize>() < clusters {
        return Err(NeuroError::Capacity { capacity: caps.iter().sum(), what: format!("{clusters} clusters") });
    }
    let tiles = caps.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vel: Vec<Vec<Vec<f64>>> = (0..cfg.particles)
        .map(|_| (0..clusters).map(|_| (0..tiles).map(|_| rng.random_range(-cfg.v_max..=cfg.v_max)).collect()).collect())
        .collect();
    let mut bits: Vec<Vec<Vec<bool>>> = vel
        .iter()
        .map(|pv| pv.iter().map(|cv| cv.iter().map(|&v| rng.random::<f64>() < sigmoid(v)).collect()).collect())
        .collect();
    let mut pos: Vec<Vec<usize>> = (0..cfg.particles).map(|p| repair(&mut bits[p], &vel[p], caps)).collect();
    let mut fit = exec.map_slice(&pos, |a| fitness(a));
    let mut pbest = bits.clone();
    let mut pbest_fit = fit.clone();
    let first = (0..cfg.particles).fold(0, |b, p| if fit[p] < fit[b] { p } else { b });
    let (mut gbest, mut gbest_pos, mut gbest_fit) = (bits[first].clone(), pos[first].clone(), fit[first]);
    let mut trace = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        for p in 0..cfg.particles {
            for c in 0..clusters {
                for t in 0..tiles {
                    let x = bits[p][c][t] as u8 as f64;
                    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                    let v = cfg.inertia * vel[p][c][t]
                        + cfg.c1 * r1 * (pbest[p][c][t] as u8 as f64 - x)
                        + cfg.c2 * r2 * (gbest[c][t] as u8 as f64 - x);
                    vel[p][c][t] = v.clamp(-cfg.v_max, cfg.v_max);
                    bits[p][c][t] = rng.random::<f64>() < sigmoid(vel[p][c][t]);
                }
            }
            pos[p] = repair(&mut bits[p], &vel[p], caps);
        }
        fit = exec.map_slice(&pos, |a| fitness(a));
        for p in 0..cfg.particles {
            if fit[p] < pbest_fit[p] {
                pbest_fit[p] = fit[p];
                pbest[p] = bits[p].clone();
            }
            if fit[p] < gbest_fit {
                gbest_fit = fit[p];
                gbest = bits[p].clone();
                gbest_pos = pos[p].clone();
            }
        }
        trace.push(gbest_fit);
    }
    Ok(PsoResult { assignment: gbest_pos, fitness: gbest_fit, trace })
}

/// Load-agnostic baseline: each cluster on a uniformly random tile with a
/// free crossbar.
pub fn random_mapping(clusters: usize, caps: &[usize], seed: u64) -> Result<Vec<usize>, NeuroError> {
    if caps.iter().sum::<usize>() < clusters {
        return Err(NeuroError::Capacity { capacity: caps.iter().sum(), what: format!("{clusters} clusters") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = vec![0usize; caps.len()];
    Ok((0..clusters)
        .map(|_| {
            let open: Vec<usize> = (0..caps.len()).filter(|&t| used[t] < caps[t]).collect();
            let t = open[rng.random_range(0..open.len())];
            used[t] += 1;
            t
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuroMapConfig {
    pub crossbar: CrossbarConfig,
    pub endurance: EnduranceModel,
    pub tiles: Vec<TileSpec>,
    pub aging: AgingModel,
    pub pso: PsoConfig,
    /// Random mappings and random placements drawn for the baseline.
    pub baseline_runs: usize,
}

impl Default for NeuroMapConfig {
    fn default() -> Self {
        let tile = |t_ambient| TileSpec { t_ambient, ..TileSpec::default() };
        Self {
            crossbar: CrossbarConfig::default(),
            endurance: EnduranceModel::default(),
            tiles: vec![tile(298.0), tile(308.0), tile(318.0), tile(328.0)],
            aging: AgingModel::default(),
            pso: PsoConfig::default(),
            baseline_runs: 10,
        }
    }
}

/// One line of the mapping CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRow {
    pub cluster: usize,
    pub tile: usize,
    pub synapse: usize,
    pub cell_row: usize,
    pub cell_col: usize,
    pub endurance: f64,
    /// Workload windows until this cell wears out.
    pub lifetime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSummary {
    pub clusters: usize,
    pub cut_cost: u64,
    pub aging_fitness: f64,
    pub random_aging_fitness_mean: f64,
    pub min_lifetime: f64,
    pub random_min_lifetime_mean: f64,
    pub fitness_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    pub clustering: Clustering,
    pub assignment: Vec<usize>,
    pub rows: Vec<MappingRow>,
    pub summary: MappingSummary,
}

impl MappingReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_mapping_csv<R: std::io::Read>(input: R) -> Result<Vec<MappingRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Partition, map to tiles, place synapses, and measure against the
/// random baselines.
pub fn map_workload(graph: &SnnWorkloadGraph, cfg: &NeuroMapConfig, seed: u64, exec: Exec) -> Result<MappingReport, NeuroError> {
    let map = build_endurance_map(&cfg.crossbar, &cfg.endurance)?;
    let clustering = kl_partition(graph, cfg.crossbar.n, seed)?;
    let problem = MappingProblem::new(graph, &clustering, cfg.tiles.clone(), cfg.aging)?;
    let caps = problem.capacities();
    let pso = pso_map(problem.clusters(), &caps, |a| problem.fitness(a), &cfg.pso, seed, exec)?;

    let labels = clustering.labels(graph.neurons.len());
    let edges = graph.edges()?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clustering.clusters.len()];
    for (s, &(_, dst)) in edges.iter().enumerate() {
        members[labels[dst]].push(s);
    }
    let activations: Vec<Vec<u64>> =
        members.iter().map(|m| m.iter().map(|&s| graph.synapses[s].activation).collect()).collect();

    let mut rows = Vec::new();
    let mut min_life = f64::INFINITY;
    for (c, syn) in members.iter().enumerate() {
        if syn.is_empty() {
            continue;
        }
        let cells = place_synapses(&activations[c], &map)?;
        min_life = min_life.min(effective_lifetime(&activations[c], &cells, &map)?);
        for (k, &s) in syn.iter().enumerate() {
            let (r, col) = cells[k];
            let e = map.endurance[[r, col]];
            let a = activations[c][k];
            let lifetime = if a == 0 { f64::INFINITY } else { e / a as f64 };
            rows.push(MappingRow { cluster: c, tile: pso.assignment[c], synapse: s, cell_row: r, cell_col: col, endurance: e, lifetime });
        }
    }
    rows.sort_by_key(|r| r.synapse);

    let runs = cfg.baseline_runs.max(1);
    let mut rand_fit = 0.0;
    let mut rand_life = 0.0;
    for k in 0..runs {
        let s = seed.wrapping_add(1 + k as u64);
        rand_fit += problem.fitness(&random_mapping(problem.clusters(), &caps, s)?);
        let mut life = f64::INFINITY;
        for (c, a) in activations.iter().enumerate() {
            if !a.is_empty() {
                let cells = place_random(a.len(), &map, s.wrapping_mul(1_000_003).wrapping_add(c as u64))?;
                life = life.min(effective_lifetime(a, &cells, &map)?);
            }
        }
        rand_life += life;
    }
    let summary = MappingSummary {
        clusters: clustering.clusters.len(),
        cut_cost: clustering.cut,
        aging_fitness: pso.fitness,
        random_aging_fitness_mean: rand_fit / runs as f64,
        min_lifetime: min_life,
        random_min_lifetime_mean: rand_life / runs as f64,
        fitness_trace: pso.trace,
    };
    Ok(MappingReport { clustering, assignment: pso.assignment, rows, summary })
}
