//! Dense math, LSTM encoder, feedforward nets, Adam and gradient checking.
//!
//! Gradients are written out by hand for each architecture; there is no
//! general autodiff. Everything runs in f64.

mod adam;
mod checkpoint;
mod feedforward;
mod gradcheck;
mod lstm;
mod matrix;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use feedforward::{FeedForwardCache, FeedForwardParams, Layer, BASELINE_HIDDEN_LAYERS, EVPI_HIDDEN_LAYERS};
pub use gradcheck::{grad_check, richardson_check, GRAD_CHECK_EPS, RICHARDSON_STEPS};
pub use lstm::{LstmCache, LstmParams, FORGET_BIAS, INIT_SCALE};
pub use matrix::Matrix;
pub use params::ParamSet;

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(1.0 - sigmoid(50.0) < 1e-20);
        assert!(sigmoid(-50.0) > 0.0 && sigmoid(-50.0) < 1e-20);
        for i in -100..=100 {
            let x = i as f64 * 0.37;
            assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-12);
            assert!(sigmoid(x + 0.01) >= sigmoid(x));
        }
    }
}
