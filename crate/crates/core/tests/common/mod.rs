#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use outage_core::grid::{build_a, parse_case_with, CaseFormat, Network, ParseOptions};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load(name: &str) -> Network {
    let path = data_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_case_with(
        &text,
        CaseFormat::from_path(&path),
        ParseOptions {
            allow_negative_reactance: true,
        },
    )
    .unwrap()
}

pub fn six_bus() -> Network {
    load("case6.json")
}

pub fn indicator(len: usize, support: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for &i in support {
        v[i] = 1.0;
    }
    v
}

/// Lines incident to any of `buses`, sorted.
pub fn lines_at(net: &Network, buses: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = buses.iter().flat_map(|&n| net.incident_lines(n).iter().copied()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Outage lines together with the lines at faulty buses.
pub fn joint_support(net: &Network, outages: &[usize], faulty: &[usize]) -> Vec<usize> {
    let mut out = lines_at(net, faulty);
    out.extend_from_slice(outages);
    out.sort_unstable();
    out.dedup();
    out
}

/// `A_θ·s` for an indicator support.
pub fn a_times(net: &Network, theta: &[f64], support: &[usize]) -> Vec<f64> {
    build_a(net, theta).unwrap().mul_vec(&indicator(net.n_lines(), support))
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub struct IdentityCheck {
    /// `B(θ' - θ)` against `A_θ'·s_o + η`.
    pub outage_only: f64,
    /// `B(θ̃' - θ)` against `A_θ̃'·s + e + η` with `s = s_o ∨ s_b` and
    /// `e = -A_θ'·(s_b ∧ ¬s_o)`.
    pub with_bad_data: f64,
    /// Same with `s = s_o + s_b`, `e = -A_θ'·s_b`; only when the line sets
    /// are disjoint.
    pub additive: Option<f64>,
    /// `‖ΔB·θ'_b‖∞` when the line sets are disjoint.
    pub footnote: Option<f64>,
}

/// Relative errors of the measurement-model identities for one event.
pub fn check_identities(
    net: &Network,
    theta: &[f64],
    theta_post: &[f64],
    eta: &[f64],
    theta_corrupt: &[f64],
    outages: &[usize],
    faulty: &[usize],
) -> IdentityCheck {
    use outage_core::grid::{masked_susceptance, susceptance};
    let b = susceptance(net);
    let l = net.n_lines();
    let diff = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let add = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x + y).collect::<Vec<f64>>();
    let rel = |y: &[f64], model: &[f64]| max_abs_diff(y, model) / max_abs(y).max(1.0);

    let y0 = b.mul_vec(&diff(theta_post, theta));
    let outage_only = rel(&y0, &add(&a_times(net, theta_post, outages), eta));

    let y = b.mul_vec(&diff(theta_corrupt, theta));
    let l_b = lines_at(net, faulty);
    let joint = joint_support(net, outages, faulty);
    let only_bad: Vec<usize> = l_b.iter().copied().filter(|x| !outages.contains(x)).collect();
    let e: Vec<f64> = a_times(net, theta_post, &only_bad).iter().map(|v| -v).collect();
    let with_bad_data = rel(&y, &add(&add(&a_times(net, theta_corrupt, &joint), &e), eta));

    let disjoint = only_bad.len() == l_b.len();
    let (additive, footnote) = if disjoint {
        let a_tilde = build_a(net, theta_corrupt).unwrap();
        let mut s = indicator(l, outages);
        for &x in &l_b {
            s[x] += 1.0;
        }
        let e: Vec<f64> = a_times(net, theta_post, &l_b).iter().map(|v| -v).collect();
        let additive = rel(&y, &add(&add(&a_tilde.mul_vec(&s), &e), eta));
        let delta_b = masked_susceptance(net, &indicator(l, outages));
        let footnote = max_abs(&delta_b.mul_vec(&diff(theta_corrupt, theta_post)));
        (Some(additive), Some(footnote))
    } else {
        (None, None)
    };
    IdentityCheck {
        outage_only,
        with_bad_data,
        additive,
        footnote,
    }
}
