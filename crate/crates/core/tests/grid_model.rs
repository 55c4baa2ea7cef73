mod common;

use common::*;
use nalgebra::DMatrix;
use outage_core::grid::{
    build_a, dc_flow_solve, incidence_matrix, parse_case, susceptance, to_native_json, CaseFormat,
};
use outage_core::rng;
use outage_core::sim::{inject_bad_data, sample_faulty_buses, sample_outage, Placement, Simulator};
use proptest::prelude::*;

#[test]
fn susceptance_is_m_d_mt_on_case118() {
    let net = load("case118.m");
    let (n, l) = (net.n_buses(), net.n_lines());
    let mut m = DMatrix::zeros(n, l);
    let mut d = DMatrix::zeros(l, l);
    for (i, line) in net.lines().iter().enumerate() {
        m[(line.from, i)] = 1.0;
        m[(line.to, i)] = -1.0;
        d[(i, i)] = 1.0 / line.reactance;
    }
    let expected = &m * d * m.transpose();
    let b = susceptance(&net).matrix().to_dense();
    let scale = expected.amax();
    for r in 0..n {
        for c in 0..n {
            assert!((b[(r, c)] - expected[(r, c)]).abs() <= 1e-12 * scale, "entry ({r},{c})");
            assert_eq!(b[(r, c)], b[(c, r)]);
        }
        let row_sum: f64 = (0..n).map(|c| b[(r, c)]).sum();
        assert!(row_sum.abs() <= 1e-9 * scale);
    }
    assert_eq!(incidence_matrix(&net).matrix().to_dense(), m);
}

#[test]
fn six_bus_line_four_column() {
    let m = incidence_matrix(&six_bus());
    let col: Vec<_> = m.matrix().col(3).collect();
    assert_eq!(col, vec![(2, 1.0), (3, -1.0)]);
}

#[test]
fn dc_flow_residual_is_tiny() {
    for name in ["case14.m", "case118.m", "case300.m"] {
        let net = load(name);
        let b = susceptance(&net);
        let p = net.balanced_injections();
        let theta = dc_flow_solve(&b, &p, net.slack()).unwrap();
        assert_eq!(theta[net.slack()], 0.0);
        let res = max_abs_diff(&b.mul_vec(&theta), &p);
        assert!(res <= 1e-10 * max_abs(&p).max(1.0), "{name}: {res}");
    }
}

#[test]
fn native_round_trip_on_case118() {
    let net = load("case118.m");
    let json = to_native_json(&net);
    let again = parse_case(&json, CaseFormat::Native).unwrap();
    assert_eq!(again, net);
    assert_eq!(to_native_json(&again), json);
}

#[test]
fn model_identities_with_noise_and_bad_data() {
    for name in ["case6.json", "case14.m", "case118.m"] {
        let net = load(name);
        let sim = Simulator::new(&net).unwrap();
        for t in 0..60u64 {
            let mut r = rng::substream(41, t);
            let k = 1 + (t % 3) as usize;
            let outages = sample_outage(&net, k.min(2), &mut r).unwrap();
            let placement = if t % 2 == 0 { Placement::Involved } else { Placement::Separated };
            let Ok(faulty) = sample_faulty_buses(&net, &outages, 1, placement, &mut r) else {
                continue;
            };
            let ev = sim.simulate(&outages, 0.02, &mut r).unwrap();
            let corrupt = inject_bad_data(&ev.theta, &ev.theta_post, &faulty, &mut r);
            let c = check_identities(&net, &ev.theta, &ev.theta_post, &ev.eta, &corrupt, &outages, &faulty);
            assert!(c.outage_only <= 1e-9, "{name} trial {t}: {}", c.outage_only);
            assert!(c.with_bad_data <= 1e-9, "{name} trial {t}: {}", c.with_bad_data);
            if let (Some(a), Some(f)) = (c.additive, c.footnote) {
                assert!(a <= 1e-9 && f <= 1e-9, "{name} trial {t}: {a} {f}");
            }
        }
    }
}

#[test]
fn overlapping_sets_break_the_additive_form() {
    // bus 3 is an outage endpoint and faulty: the additive decomposition
    // double counts line 4
    let net = six_bus();
    let sim = Simulator::new(&net).unwrap();
    let ev = sim.simulate(&[3], 0.0, &mut rng::seeded(1)).unwrap();
    let mut corrupt = ev.theta_post.clone();
    corrupt[2] += 0.05;
    let b = susceptance(&net);
    let y: Vec<f64> = b.mul_vec(&corrupt.iter().zip(&ev.theta).map(|(a, c)| a - c).collect::<Vec<_>>());
    let a_tilde = build_a(&net, &corrupt).unwrap();
    let l_b = lines_at(&net, &[2]);
    let mut s = indicator(net.n_lines(), &[3]);
    for &x in &l_b {
        s[x] += 1.0;
    }
    let e: Vec<f64> = a_times(&net, &ev.theta_post, &l_b).iter().map(|v| -v).collect();
    let model: Vec<f64> = a_tilde.mul_vec(&s).iter().zip(&e).map(|(a, c)| a + c).collect();
    assert!(max_abs_diff(&y, &model) > 1e-3);
    let c = check_identities(&net, &ev.theta, &ev.theta_post, &ev.eta, &corrupt, &[3], &[2]);
    assert!(c.with_bad_data <= 1e-12 && c.additive.is_none());
}

fn case14() -> outage_core::grid::Network {
    load("case14.m")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn a_theta_matches_masked_laplacian(
        theta in proptest::collection::vec(-0.5f64..0.5, 14),
        bits in proptest::collection::vec(any::<bool>(), 20),
    ) {
        let net = case14();
        let l = net.n_lines();
        let s: Vec<f64> = (0..l).map(|i| f64::from(u8::from(bits[i % bits.len()]))).collect();
        let via_a = build_a(&net, &theta).unwrap().mul_vec(&s);
        let via_b = outage_core::grid::masked_susceptance(&net, &s).mul_vec(&theta);
        let scale = max_abs(&via_b).max(1.0);
        prop_assert!(max_abs_diff(&via_a, &via_b) <= 1e-12 * scale);
    }

    #[test]
    fn a_column_zero_iff_flat_angles(
        theta in proptest::collection::vec(prop_oneof![Just(0.0f64), Just(0.1), -0.3f64..0.3], 14),
    ) {
        let net = case14();
        let a = build_a(&net, &theta).unwrap();
        for (i, line) in net.lines().iter().enumerate() {
            let zero = a.matrix().col(i).all(|(_, v)| v == 0.0);
            prop_assert_eq!(zero, theta[line.from] == theta[line.to]);
        }
    }
}
