use super::denoise::{log_normal_pdf, normalize_log_weights};
use super::prior::{clamp_prob, GaussMixture, PriorParams, NOISE_FLOOR, VAR_FLOOR};

/// Working variables of the swept solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub s_hat: Vec<f64>,
    pub s_var: Vec<f64>,
    /// Posterior log-odds behind `s_hat`, which keep their order after `s_hat` saturates.
    pub s_logit: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub e_var: Vec<f64>,
    /// Output-side variances `V_n`.
    pub v: Vec<f64>,
    /// Output-side means `ω_n`, Onsager term included.
    pub omega: Vec<f64>,
    pub g: Vec<f64>,
    pub iteration: usize,
    pub sigma2_s: Vec<f64>,
    pub r_s: Vec<f64>,
    pub sigma2_e: Vec<f64>,
    pub r_e: Vec<f64>,
}

impl SolverState {
    /// Starting point: every line out, no contamination, unit output variance.
    pub fn initial(y: &[f64], lines: usize) -> Self {
        let n = y.len();
        Self {
            s_hat: vec![1.0; lines],
            s_var: vec![n as f64 / lines.max(1) as f64; lines],
            s_logit: vec![f64::INFINITY; lines],
            e_hat: vec![0.0; n],
            e_var: vec![1.0 / n.max(1) as f64; n],
            v: vec![1.0; n],
            omega: y.to_vec(),
            g: vec![0.0; n],
            iteration: 0,
            sigma2_s: vec![0.0; lines],
            r_s: vec![0.0; lines],
            sigma2_e: vec![0.0; n],
            r_e: vec![0.0; n],
        }
    }
}

/// One EM step for the outage probability and the contamination mixture.
///
/// The mixture statistics are taken over the per-bus pseudo-observations
/// `R_e ~ N(e, Σ²_e)` from the last sweep.
pub fn em_update_priors(state: &SolverState, params: &PriorParams) -> PriorParams {
    let l = state.s_hat.len().max(1) as f64;
    let p_o = clamp_prob(state.s_hat.iter().sum::<f64>() / l);
    PriorParams {
        p_o,
        gm: update_mixture(&state.r_e, &state.sigma2_e, &params.gm),
        noise_var: params.noise_var,
    }
}

fn update_mixture(r: &[f64], r_var: &[f64], gm: &GaussMixture) -> GaussMixture {
    let k = gm.components();
    let n = r.len();
    if k == 0 || n == 0 {
        return gm.clone();
    }
    let mut resp_sum = vec![0.0; k];
    let mut mean_num = vec![0.0; k];
    let mut gammas = vec![vec![0.0; k]; n];
    let mut zetas = vec![vec![0.0; k]; n];
    let mut resp = vec![vec![0.0; k]; n];
    let mut w = vec![0.0; k + 1];
    for i in 0..n {
        let ve = r_var[i].max(VAR_FLOOR);
        w[0] = gm.spike.ln() + log_normal_pdf(r[i], 0.0, ve);
        for c in 0..k {
            w[c + 1] = gm.weights[c].ln()
                + log_normal_pdf(r[i], gm.means[c], gm.variances[c] + ve);
        }
        normalize_log_weights(&mut w);
        for c in 0..k {
            let prec = 1.0 / ve + 1.0 / gm.variances[c];
            let gamma = (r[i] / ve + gm.means[c] / gm.variances[c]) / prec;
            gammas[i][c] = gamma;
            zetas[i][c] = 1.0 / prec;
            resp[i][c] = w[c + 1];
            resp_sum[c] += w[c + 1];
            mean_num[c] += w[c + 1] * gamma;
        }
    }

    let mut out = gm.clone();
    let total: f64 = resp_sum.iter().sum();
    out.spike = (1.0 - total / n as f64).max(0.0);
    for c in 0..k {
        out.weights[c] = resp_sum[c] / n as f64;
        if resp_sum[c] <= 1e-12 {
            continue;
        }
        let mu = mean_num[c] / resp_sum[c];
        let spread: f64 = (0..n)
            .map(|i| resp[i][c] * ((mu - gammas[i][c]).powi(2) + zetas[i][c]))
            .sum();
        out.means[c] = mu;
        out.variances[c] = (spread / resp_sum[c]).max(VAR_FLOOR);
    }
    let norm = out.spike + out.weights.iter().sum::<f64>();
    out.spike /= norm;
    out.weights.iter_mut().for_each(|w| *w /= norm);
    out
}

/// EM step for the measurement-noise variance.
pub fn em_update_noise(state: &SolverState, y: &[f64], sigma2: f64) -> f64 {
    let n = y.len();
    if n == 0 {
        return sigma2;
    }
    let total: f64 = (0..n)
        .map(|i| {
            let v = state.v[i].max(VAR_FLOOR);
            let denom = 1.0 / sigma2 + 1.0 / v;
            ((y[i] - state.omega[i]).powi(2) / v) / denom + 1.0 / denom
        })
        .sum();
    (total / n as f64).max(NOISE_FLOOR)
}
