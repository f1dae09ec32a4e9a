//! FSR-driven PE deactivation.
//!
//! Critical faulty PEs are always switched off. Among the non-critical ones,
//! any two active PEs must not be 4-neighbours, and the active faulty rate
//! must not exceed `FR_max_non_crit`. The set switched off to break
//! adjacency is a minimum vertex cover of the faulty-PE adjacency graph; the
//! grid graph is bipartite under `(row + col) % 2`, so König's theorem gives
//! the cover from a maximum matching. If the rate is still too high, more
//! faulty PEs are switched off, most faulty active neighbours first. The
//! total count is therefore the least that satisfies both constraints.

use super::{ArrayState, Criticality, FaultStatusRegister, MacError};

/// Updates the active mask; returns the PEs switched off, in order. On error
/// the state is left untouched.
pub fn deactivate(state: &mut ArrayState, fsr: &FaultStatusRegister) -> Result<Vec<(usize, usize)>, MacError> {
    let fr_max = fsr.fr_max_non_crit;
    if !(0.0..=1.0).contains(&fr_max) {
        return Err(MacError::Fraction("fr_max_non_crit", fr_max));
    }
    check_consistent(state, fsr)?;
    let mut s = state.clone();
    let mut off = Vec::new();
    let switch_off = |s: &mut ArrayState, r: usize, c: usize, off: &mut Vec<(usize, usize)>| {
        if s.is_active(r, c) {
            s.set_active(r, c, false);
            off.push((r, c));
        }
    };

    let mut entries = fsr.entries.clone();
    entries.sort_by_key(|e| (e.row, e.col));
    for e in entries.iter().filter(|e| e.criticality == Criticality::Critical) {
        switch_off(&mut s, e.row, e.col, &mut off);
    }

    let live: Vec<(usize, usize)> = entries
        .iter()
        .filter(|e| e.criticality == Criticality::NonCritical && s.is_active(e.row, e.col))
        .map(|e| (e.row, e.col))
        .collect();
    for (r, c) in min_vertex_cover(&live) {
        switch_off(&mut s, r, c, &mut off);
    }

    while s.num_active() > 0 && s.active_fault_rate() > fr_max {
        let (r, c) = most_clustered(&s).expect("a faulty PE is active while the rate is positive");
        switch_off(&mut s, r, c, &mut off);
    }
    if s.num_active() == 0 {
        return Err(MacError::Infeasible(format!(
            "every PE would be deactivated to reach an active non-critical fault rate of at most {fr_max}"
        )));
    }
    *state = s;
    Ok(off)
}

fn check_consistent(state: &ArrayState, fsr: &FaultStatusRegister) -> Result<(), MacError> {
    let expected = state.fsr(fsr.fr_max_non_crit);
    let mut a = expected.entries;
    let mut b = fsr.entries.clone();
    a.sort_by_key(|e| (e.row, e.col));
    b.sort_by_key(|e| (e.row, e.col));
    if a != b {
        return Err(MacError::Infeasible("FSR entries do not match the fault map".into()));
    }
    Ok(())
}

/// Active faulty PE with the most active faulty 4-neighbours, ties by
/// `(row, col)`.
fn most_clustered(s: &ArrayState) -> Option<(usize, usize)> {
    let (rows, cols) = (s.config.rows, s.config.cols);
    let live = |r: usize, c: usize| s.fault(r, c).is_some() && s.is_active(r, c);
    let mut best: Option<((usize, usize), usize)> = None;
    for r in 0..rows {
        for c in 0..cols {
            if !live(r, c) {
                continue;
            }
            let degree = neighbours(r, c, rows, cols).filter(|&(a, b)| live(a, b)).count();
            if best.is_none_or(|(_, d)| degree > d) {
                best = Some(((r, c), degree));
            }
        }
    }
    best.map(|(pe, _)| pe)
}

fn neighbours(r: usize, c: usize, rows: usize, cols: usize) -> impl Iterator<Item = (usize, usize)> {
    let up = r.checked_sub(1).map(|a| (a, c));
    let left = c.checked_sub(1).map(|b| (r, b));
    let down = (r + 1 < rows).then_some((r + 1, c));
    let right = (c + 1 < cols).then_some((r, c + 1));
    [up, left, down, right].into_iter().flatten()
}

/// Minimum vertex cover of the 4-adjacency graph on `pes` (sorted).
pub(crate) fn min_vertex_cover(pes: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let rows = pes.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    let cols = pes.iter().map(|p| p.1 + 1).max().unwrap_or(0);
    let index = |p: (usize, usize)| pes.binary_search(&p).ok();
    let left: Vec<usize> = (0..pes.len()).filter(|&i| (pes[i].0 + pes[i].1) % 2 == 0).collect();
    let adj: Vec<Vec<usize>> = pes
        .iter()
        .map(|&(r, c)| neighbours(r, c, rows, cols).filter_map(index).collect())
        .collect();

    let n = pes.len();
    let mut match_of: Vec<Option<usize>> = vec![None; n];
    for &u in &left {
        let mut seen = vec![false; n];
        augment(u, &adj, &mut match_of, &mut seen);
    }

    // König: Z = vertices reachable from free left vertices by alternating
    // paths; cover = (L \ Z) ∪ (R ∩ Z).
    let mut in_z = vec![false; n];
    let mut queue: Vec<usize> = left.iter().copied().filter(|&u| match_of[u].is_none()).collect();
    for &u in &queue {
        in_z[u] = true;
    }
    while let Some(u) = queue.pop() {
        for &v in &adj[u] {
            if !in_z[v] {
                in_z[v] = true;
                if let Some(w) = match_of[v] {
                    if !in_z[w] {
                        in_z[w] = true;
                        queue.push(w);
                    }
                }
            }
        }
    }
    (0..n)
        .filter(|&i| {
            let is_left = (pes[i].0 + pes[i].1) % 2 == 0;
            (is_left && !in_z[i]) || (!is_left && in_z[i])
        })
        .map(|i| pes[i])
        .collect()
}

/// Kuhn augmenting-path search from left vertex `start`, iterative so deep
/// alternating paths on large arrays do not exhaust the stack.
fn augment(start: usize, adj: &[Vec<usize>], match_of: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    let mut stack = vec![(start, 0usize)];
    let mut via: Vec<usize> = Vec::new();
    while let Some(top) = stack.last_mut() {
        let (u, ei) = *top;
        if ei == adj[u].len() {
            stack.pop();
            via.pop();
            continue;
        }
        top.1 += 1;
        let v = adj[u][ei];
        if seen[v] {
            continue;
        }
        seen[v] = true;
        match match_of[v] {
            None => {
                via.push(v);
                for (&(u, _), &v) in stack.iter().zip(&via) {
                    match_of[u] = Some(v);
                    match_of[v] = Some(u);
                }
                return true;
            }
            Some(w) => {
                via.push(v);
                stack.push((w, 0));
            }
        }
    }
    false
}
