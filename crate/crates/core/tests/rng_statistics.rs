use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use zo_adamu::GaussianStream;

const N: usize = 1_000_000;

fn draws(seed: u64, n: usize) -> Vec<f64> {
    GaussianStream::new(seed).take(n).collect()
}

#[test]
fn moments_match_standard_normal() {
    let x = draws(12345, N);
    let mean = x.iter().sum::<f64>() / N as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (N - 1) as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn two_sided_tail_fraction() {
    let x = draws(7, N);
    let frac = x.iter().filter(|v| v.abs() > 1.96).count() as f64 / N as f64;
    assert!((0.044..0.056).contains(&frac), "tail fraction {frac}");
}

#[test]
fn kolmogorov_smirnov_statistic() {
    let mut x = draws(2718, N);
    x.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = N as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = normal.cdf(v);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 0.002, "KS statistic {d}");
}

#[test]
fn different_seeds_are_independent() {
    const PAIRS: usize = 100_000;
    const BINS: usize = 10;
    let normal = Normal::standard();
    let bin = |v: f64| ((normal.cdf(v) * BINS as f64) as usize).min(BINS - 1);
    let (a, b) = (draws(1, PAIRS), draws(2, PAIRS));
    let mut table = [[0usize; BINS]; BINS];
    for (x, y) in a.iter().zip(&b) {
        table[bin(*x)][bin(*y)] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..BINS).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..BINS {
        for j in 0..BINS {
            let expected = rows[i] as f64 * cols[j] as f64 / PAIRS as f64;
            chi2 += (table[i][j] as f64 - expected).powi(2) / expected;
        }
    }
    let dof = ((BINS - 1) * (BINS - 1)) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi-square {chi2} on {dof} dof, p = {p}");
}

#[test]
fn neighbouring_seeds_differ() {
    let (a, b) = (draws(42, 100), draws(43, 100));
    assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    assert_eq!(draws(42, 100), draws(42, 100));
    assert!(draws(0, 10).iter().all(|v| v.is_finite()));
}

#[test]
fn reset_replays() {
    let mut s = GaussianStream::new(9);
    let first: Vec<f64> = (0..5).map(|_| s.draw_standard_normal()).collect();
    s.reset(0);
    let again: Vec<f64> = (0..5).map(|_| s.draw_standard_normal()).collect();
    assert_eq!(first, again);
    s.reset(3);
    assert_eq!(s.draw_standard_normal(), first[3]);
    let pos = s.counter();
    let mut t = s;
    t.reset(pos);
    assert_eq!(t.draw_standard_normal(), s.draw_standard_normal());
}
