mod common;

use common::{balanced_injections, direct_flows, rel_close};
use evgrid::io::{synth_case, Template};
use evgrid::ptdf::{dc_flows_direct, NetworkPtdf};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ptdf_flows_match_dense_solve(seed in any::<u64>(), n in 2usize..=20) {
        let case = synth_case(Template::Mesh { buses: n }, seed).case;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let p = balanced_injections(&mut rng, n);
        let got = ptdf.flows(&p);
        let want = direct_flows(&case, &p);
        let lib = dc_flows_direct(&case, &p).unwrap();
        for ((g, w), d) in got.iter().zip(&want).zip(&lib) {
            prop_assert!(rel_close(*g, *w, 1e-8), "{g} vs {w}");
            prop_assert!(rel_close(*d, *w, 1e-8), "{d} vs {w}");
        }
    }

    #[test]
    fn slack_column_is_zero(seed in any::<u64>(), n in 2usize..=15) {
        let case = synth_case(Template::Mesh { buses: n }, seed).case;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let slack = case.bus_position(&case.slack_buses[0]).unwrap();
        for l in 0..case.lines.len() {
            prop_assert_eq!(ptdf.factor(l, slack), 0.0);
        }
    }

    #[test]
    fn flows_are_linear_in_injections(seed in any::<u64>(), n in 2usize..=12, a in -3.0f64..3.0) {
        let case = synth_case(Template::Mesh { buses: n }, seed).case;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = balanced_injections(&mut rng, n);
        let q = balanced_injections(&mut rng, n);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + y).collect();
        let (fp, fq, fm) = (ptdf.flows(&p), ptdf.flows(&q), ptdf.flows(&mix));
        for l in 0..fm.len() {
            prop_assert!(rel_close(fm[l], a * fp[l] + fq[l], 1e-9));
        }
    }

    #[test]
    fn flows_satisfy_kirchhoff_current_law(seed in any::<u64>(), n in 2usize..=15) {
        let case = synth_case(Template::Mesh { buses: n }, seed).case;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = balanced_injections(&mut rng, n);
        let f = ptdf.flows(&p);
        let mut net = vec![0.0; n];
        for (line, flow) in case.lines.iter().zip(&f) {
            net[case.bus_position(&line.from_bus).unwrap()] += flow;
            net[case.bus_position(&line.to_bus).unwrap()] -= flow;
        }
        for (out, inj) in net.iter().zip(&p) {
            prop_assert!((out - inj).abs() <= 1e-8 * 100.0);
        }
    }
}

#[test]
fn radial_factors_are_zero_or_one() {
    // in a star rooted at bus 1 with the slack at bus n, every path is unique
    let case = synth_case(Template::Star { buses: 6 }, 3).case;
    let ptdf = NetworkPtdf::build(&case).unwrap();
    for l in 0..case.lines.len() {
        for b in 0..case.buses.len() {
            let f = ptdf.factor(l, b);
            assert!(f.abs() < 1e-12 || (f.abs() - 1.0).abs() < 1e-12, "line {l} bus {b}: {f}");
        }
    }
}
