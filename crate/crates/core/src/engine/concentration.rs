use serde::{Deserialize, Serialize};

/// Class count, prior rate and sample count behind the adaptive
/// concentration `alpha = k / (lambda + ln n)`.
///
/// This is the mean of the Gamma(k, lambda + ln n) approximation to the
/// posterior of `alpha` under an Exponential(lambda) prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationState {
    pub k: usize,
    pub lambda: f64,
    pub n: u64,
}

impl ConcentrationState {
    pub fn new(k: usize, lambda: f64, n: u64) -> Self {
        ConcentrationState { k, lambda, n }
    }

    pub fn alpha(&self) -> f64 {
        adapt_alpha(self)
    }
}

/// `k / (lambda + ln n)` with the natural log. `n = 0` is treated like
/// `n = 1`.
pub fn adapt_alpha(state: &ConcentrationState) -> f64 {
    let n = state.n.max(1) as f64;
    state.k as f64 / (state.lambda + n.ln())
}
