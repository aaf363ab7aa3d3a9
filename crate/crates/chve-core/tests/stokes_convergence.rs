//! Manufactured-solution convergence study for the Taylor-Hood Stokes solve.

use chve_core::verify::stokes_convergence_rates;

#[test]
fn taylor_hood_rates_match_theory() {
    let (rv, rp) = stokes_convergence_rates(&[8, 16, 32], 1.0).unwrap();
    for r in &rv {
        assert!(
            (r - 3.0).abs() <= 0.3,
            "velocity rate {r} outside 3.0 +/- 0.3 (all: {rv:?})"
        );
    }
    for r in &rp {
        assert!(
            (r - 2.0).abs() <= 0.3,
            "pressure rate {r} outside 2.0 +/- 0.3 (all: {rp:?})"
        );
    }
}
