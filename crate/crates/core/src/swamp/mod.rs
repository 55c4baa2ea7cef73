//! Swept approximate message passing for `y = A s + e + η` with a Bernoulli
//! prior on the outage indicators `s` and a spike-plus-Gaussian-mixture prior
//! on the contamination `e`, optionally learning all prior parameters by EM.

mod denoise;
mod em;
mod prior;
mod solver;

pub use denoise::{denoise_e, denoise_s, posterior_log_odds};
pub use em::{em_update_noise, em_update_priors, SolverState};
pub use prior::{clamp_prob, GaussMixture, PriorParams, NOISE_FLOOR, PROB_FLOOR, VAR_FLOOR};
pub use solver::{swamp_solve, write_trace_csv, NoiseAnneal, SparseEstimate, SwampConfig, SwampRun, TraceRow};
