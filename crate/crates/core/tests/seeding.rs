use hwrel_core::macfault::{faulty_per_column, seed_fault_map, ArrayConfig, MacFormat, SignatureSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Round-half-up of `fr_tenths / 1000 · rows` in integers.
fn expected_count(fr_tenths: u64, rows: u64) -> usize {
    ((fr_tenths * rows + 500) / 1000) as usize
}

#[test]
fn every_column_has_the_rounded_count() {
    let spec = SignatureSpec::non_critical(2);
    for rows in [1usize, 4, 7, 16, 100, 128] {
        for fr_tenths in [0u64, 5, 25, 50, 75, 100, 125, 200, 375, 500, 875, 1000] {
            let fr = fr_tenths as f64 / 10.0;
            let want = expected_count(fr_tenths, rows as u64);
            assert_eq!(faulty_per_column(fr, rows), want, "FR {fr} rows {rows}");
            let cfg = ArrayConfig { rows, cols: 9, format: MacFormat::Int8 };
            let s = seed_fault_map(cfg, fr, &spec, rows as u64 * 1000 + fr_tenths).unwrap();
            for c in 0..cfg.cols {
                let n = (0..rows).filter(|&r| s.fault(r, c).is_some()).count();
                assert_eq!(n, want, "FR {fr} rows {rows} col {c}");
            }
        }
    }
    assert_eq!(faulty_per_column(7.5, 128), 10);
}

fn chi_square(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}

#[test]
fn faulty_rows_are_uniform_over_seeds() {
    let cfg = ArrayConfig { rows: 128, cols: 8, format: MacFormat::Int8 };
    let spec = SignatureSpec::non_critical(2);
    let mut pooled = vec![0u64; cfg.rows];
    let mut first_col = vec![0u64; cfg.rows];
    for seed in 0..1000u64 {
        let s = seed_fault_map(cfg, 7.5, &spec, seed).unwrap();
        for f in s.faults() {
            pooled[f.row] += 1;
            if f.col == 0 {
                first_col[f.row] += 1;
            }
        }
    }
    let critical = ChiSquared::new((cfg.rows - 1) as f64).unwrap().inverse_cdf(0.99);
    for (name, counts) in [("pooled", &pooled), ("column 0", &first_col)] {
        let stat = chi_square(counts);
        assert!(stat < critical, "{name}: chi-square {stat:.1} >= {critical:.1}");
    }
    assert_eq!(first_col.iter().sum::<u64>(), 10 * 1000);
}
