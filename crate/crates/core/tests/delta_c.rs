//! Critical recovery rate for the nearest-neighbour process on Z.

use subcrit_cp_core::graphical::{estimate_delta_c, estimate_growth_rate, DeltaCMethod};
use subcrit_cp_core::{Caps, Error, Group, Kernel};

/// The grid minimum of `(1/t) log E|η_t|` is an upper bound on `r`, so the
/// Monte Carlo interval sits at or above the true critical rate (about 0.607 for
/// rates 1, from the known critical infection rate 1.6494 of the line).
#[test]
fn monte_carlo_bisection_on_the_line() {
    let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
    let method = DeltaCMethod::Mc { t_grid: vec![10.0, 20.0, 40.0], replicates: 10_000, seed: 5 };
    let iv = estimate_delta_c(&k, &method, (0.4, 0.8), 0.05).unwrap();
    println!("delta_c in [{}, {}]", iv.lo, iv.hi);
    assert!(iv.hi - iv.lo <= 0.05);
    assert!(0.4 < iv.lo && iv.hi < 0.8, "{iv:?}");
    assert!(iv.hi > 0.6);
    // r̂ along the trace is nonincreasing in δ, up to two standard errors.
    let mut trace = iv.trace.clone();
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in trace.windows(2) {
        assert!(w[1].1 <= w[0].1 + 2.0 * (w[0].2 + w[1].2), "{trace:?}");
    }
}

#[test]
fn estimator_bounds() {
    let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
    for delta in [1.0, 2.0] {
        let est = estimate_growth_rate(&k, delta, &[1.0, 3.0], 20_000, 8).unwrap();
        for p in &est.points {
            let r = p.rate.unwrap();
            assert!(r.estimate >= -delta - 3.0 * r.std_err && r.estimate <= 2.0 - delta + 3.0 * r.std_err);
        }
    }
}

#[test]
fn degenerate_and_spectral_cases() {
    let zero = Kernel::zero(Group::zd(1));
    let iv = estimate_delta_c(&zero, &DeltaCMethod::Spectral { caps: Caps::new(3, 2) }, (0.1, 1.0), 0.01).unwrap();
    assert_eq!((iv.lo, iv.hi), (0.0, 0.0));
    let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
    let err = estimate_delta_c(&k, &DeltaCMethod::Spectral { caps: Caps::new(6, 8) }, (0.2, 1.0), 0.05).unwrap_err();
    assert_eq!(err, Error::BracketNoSignChange { lo: 0.2, hi: 1.0 });
}
