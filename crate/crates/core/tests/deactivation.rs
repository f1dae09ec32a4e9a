//! Deactivation against exhaustive search on every small 4×4 fault map.

use hwrel_core::macfault::{
    classify, deactivate, seed_fault_map, ArrayConfig, ArrayState, Criticality, LogicConeFault, MacFormat,
    SignatureSpec,
};

const SIDE: usize = 4;
const PES: u32 = 16;
/// Bits whose right-hand neighbour is in the same row.
const HAS_RIGHT: u32 = 0x7777;

/// Fewest faulty PEs to switch off; PE `(r, c)` is bit `4r + c`.
/// `fr_max = num / den`.
fn oracle(faulty: u32, critical: u32, num: u32, den: u32) -> Option<u32> {
    let mut best: Option<u32> = None;
    // walk every subset of the faulty set
    let mut off = faulty;
    loop {
        if off & critical == critical {
            let on = faulty & !off;
            let adjacent = (on & (on >> 1) & HAS_RIGHT) | (on & (on >> SIDE));
            let active = PES - off.count_ones();
            let rate_ok = active > 0 && on.count_ones() * den <= num * active;
            if adjacent == 0 && rate_ok && best.is_none_or(|b| off.count_ones() < b) {
                best = Some(off.count_ones());
            }
        }
        if off == 0 {
            break;
        }
        off = (off - 1) & faulty;
    }
    best
}

fn fault(bit: u32, critical: bool) -> LogicConeFault {
    let b = if critical { 2 } else { 1 };
    LogicConeFault { row: (bit / 4) as usize, col: (bit % 4) as usize, cone_bits: vec![(b, true)], carry: true, carry_sign: 1 }
}

#[test]
fn matches_exhaustive_search_on_all_small_maps() {
    let cfg = ArrayConfig { rows: SIDE, cols: SIDE, format: MacFormat::Int8 };
    let limits = [(1u32, 10u32), (1, 5), (1, 4), (1, 1)];
    let mut cases = 0usize;
    for faulty in 0u32..(1 << PES) {
        if faulty.count_ones() > 6 {
            continue;
        }
        let mut critical = faulty;
        loop {
            let faults = (0..PES).filter(|b| faulty >> b & 1 == 1).map(|b| fault(b, critical >> b & 1 == 1)).collect();
            let base = ArrayState::with_faults(cfg, faults).unwrap();
            for &(num, den) in &limits {
                let fr_max = num as f64 / den as f64;
                let want = oracle(faulty, critical, num, den).expect("switching off every faulty PE is always allowed");
                let mut s = base.clone();
                let fsr = s.fsr(fr_max);
                let off = deactivate(&mut s, &fsr).unwrap();
                assert_eq!(off.len() as u32, want, "faulty {faulty:#06x} critical {critical:#06x} fr_max {fr_max}");
                assert!(off.iter().all(|&(r, c)| s.fault(r, c).is_some()));
                assert!(s.active_fault_rate() <= fr_max);
                assert!(s.adjacent_active_faulty_pairs().is_empty());
                assert!(s
                    .faults()
                    .all(|f| !s.is_active(f.row, f.col) || classify(f, cfg.format) == Criticality::NonCritical));
                cases += 1;
            }
            if critical == 0 {
                break;
            }
            critical = (critical - 1) & faulty;
        }
    }
    // Σ_{f ≤ 6} C(16, f)·2^f placements and criticality patterns
    assert_eq!(cases, 686_401 * limits.len());
}

#[test]
fn seeded_maps_satisfy_the_protocol() {
    for seed in 0..20u64 {
        for format in [MacFormat::Int8, MacFormat::BFloat16] {
            let cfg = ArrayConfig { rows: 64, cols: 64, format };
            let spec = SignatureSpec { critical_fraction: 0.2, ..SignatureSpec::non_critical(format.non_critical_bits()) };
            let mut s = seed_fault_map(cfg, 15.0, &spec, seed).unwrap();
            let fsr = s.fsr(0.075);
            let before = s.num_faulty();
            let off = deactivate(&mut s, &fsr).unwrap();
            assert!(s.active_fault_rate() <= 0.075);
            assert!(s.adjacent_active_faulty_pairs().is_empty());
            assert!(s.faults().all(|f| !s.is_active(f.row, f.col) || classify(f, format) == Criticality::NonCritical));
            assert_eq!(s.num_active(), cfg.num_pes() - off.len());
            assert!(off.len() < before);
        }
    }
}
