use reach_adp::scenario::{binomial_tail, sample_bound, ScenarioParams};

#[test]
fn exact_bounds_for_the_reference_settings() {
    // minimal N from an independent 50-digit evaluation of the binomial tail
    for (m, want) in [(100, 2482u64), (500, 11043), (1000, 21463)] {
        let p = ScenarioParams::new(0.05, 0.01, m).unwrap();
        assert_eq!(sample_bound(&p), want);
    }
}

#[test]
fn tail_is_monotone_in_n() {
    let mut prev = 1.0;
    for n in (50..3000).step_by(37) {
        let t = binomial_tail(n, 0.05, 50);
        assert!(t <= prev + 1e-15);
        prev = t;
    }
}
