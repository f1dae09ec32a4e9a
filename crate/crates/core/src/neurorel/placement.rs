//! Endurance-aware synapse placement: the most active synapses go to the
//! coolest, longest-lived cells.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EnduranceMap, NeuroError};

/// Cell `(row, col)` of every synapse, in input order.
pub type Placement = Vec<(usize, usize)>;

fn check_fits(count: usize, map: &EnduranceMap) -> Result<(), NeuroError> {
    let cells = map.n() * map.n();
    if count > cells {
        return Err(NeuroError::Capacity { capacity: cells, what: format!("{count} synapses") });
    }
    Ok(())
}

/// Cells by endurance, highest first, ties by `(row, col)`.
fn cells_by_endurance(map: &EnduranceMap) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = map.endurance.indexed_iter().map(|(c, _)| c).collect();
    cells.sort_by(|&a, &b| map.endurance[b].total_cmp(&map.endurance[a]).then(a.cmp(&b)));
    cells
}

/// Synapses sorted by activation (descending, ties by index) take cells
/// sorted by endurance (descending, ties by `(row, col)`).
pub fn place_synapses(activations: &[u64], map: &EnduranceMap) -> Result<Placement, NeuroError> {
    check_fits(activations.len(), map)?;
    let mut order: Vec<usize> = (0..activations.len()).collect();
    order.sort_by_key(|&s| (std::cmp::Reverse(activations[s]), s));
    let cells = cells_by_endurance(map);
    let mut out = vec![(0, 0); activations.len()];
    for (&s, &cell) in order.iter().zip(&cells) {
        out[s] = cell;
    }
    Ok(out)
}

/// Uniformly random injective placement (the endurance-agnostic baseline).
pub fn place_random(count: usize, map: &EnduranceMap, seed: u64) -> Result<Placement, NeuroError> {
    check_fits(count, map)?;
    let mut cells: Vec<(usize, usize)> = map.endurance.indexed_iter().map(|(c, _)| c).collect();
    let (chosen, _) = cells.partial_shuffle(&mut ChaCha8Rng::seed_from_u64(seed), count);
    Ok(chosen.to_vec())
}

/// Workload windows until the first mapped cell wears out:
/// `min endurance / activation` over synapses with nonzero activation
/// (infinite if every activation is zero).
pub fn effective_lifetime(activations: &[u64], placement: &Placement, map: &EnduranceMap) -> Result<f64, NeuroError> {
    if activations.is_empty() || placement.len() != activations.len() {
        return Err(NeuroError::NothingMapped);
    }
    let n = map.n();
    let mut life = f64::INFINITY;
    for (&a, &(r, c)) in activations.iter().zip(placement) {
        if r >= n || c >= n {
            return Err(NeuroError::CellOutOfRange { row: r, col: c, n });
        }
        if a > 0 {
            life = life.min(map.endurance[[r, c]] / a as f64);
        }
    }
    Ok(life)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn strip(endurance: ndarray::Array2<f64>) -> EnduranceMap {
        EnduranceMap { temperature: endurance.mapv(|_| 300.0), endurance }
    }

    #[test]
    fn hottest_synapse_on_the_best_cell() {
        let m = strip(array![[1e6, 1e8], [1e10, 1.0]]);
        let p = place_synapses(&[5, 1, 3], &m).unwrap();
        assert_eq!(p, vec![(1, 0), (0, 0), (0, 1)]);
        assert_eq!(m.endurance[[p[0].0, p[0].1]], 1e10);
    }

    #[test]
    fn ties_and_single_synapse() {
        let m = strip(array![[2.0, 2.0], [2.0, 2.0]]);
        assert_eq!(place_synapses(&[4, 4, 4], &m).unwrap(), vec![(0, 0), (0, 1), (1, 0)]);
        let m = strip(array![[1.0, 9.0], [3.0, 2.0]]);
        assert_eq!(place_synapses(&[1], &m).unwrap(), vec![(0, 1)]);
        assert!(place_synapses(&[1; 5], &m).is_err());
    }

    #[test]
    fn lifetime_definition() {
        let m = strip(array![[1e6, 5e6], [7e6, 1e3]]);
        assert_eq!(effective_lifetime(&[10], &vec![(0, 0)], &m).unwrap(), 1e5);
        // the unused cell (1, 1) has tiny endurance and changes nothing
        assert_eq!(effective_lifetime(&[10, 0], &vec![(0, 0), (1, 1)], &m).unwrap(), 1e5);
        assert_eq!(effective_lifetime(&[0], &vec![(1, 1)], &m).unwrap(), f64::INFINITY);
        assert!(effective_lifetime(&[], &vec![], &m).is_err());
    }

    #[test]
    fn random_placement_is_injective() {
        let m = strip(ndarray::Array2::from_elem((8, 8), 1.0));
        let mut p = place_random(40, &m, 3).unwrap();
        p.sort_unstable();
        p.dedup();
        assert_eq!(p.len(), 40);
    }
}
