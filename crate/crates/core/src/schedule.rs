//! Per-epoch weights `(w_R, w_B)` for the regional and boundary terms.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// `(1, α0)` at every epoch.
    Constant,
    /// `(1, α(e))`, `α(e) = min(α0 + step·e, cap)`.
    Increase,
    /// `(1 - α(e), α(e))` with `cap < 1`, so the regional term never vanishes.
    Rebalance,
    /// `(0, α0)`: the boundary term alone.
    BoundaryOnly,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Constant => "constant",
            Strategy::Increase => "increase",
            Strategy::Rebalance => "rebalance",
            Strategy::BoundaryOnly => "boundary_only",
        }
    }

    fn default_cap(self) -> f64 {
        match self {
            Strategy::Rebalance => 0.99,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Strategy::Constant),
            "increase" => Ok(Strategy::Increase),
            "rebalance" => Ok(Strategy::Rebalance),
            "boundary_only" => Ok(Strategy::BoundaryOnly),
            other => Err(Error::InvalidSchedule(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSchedule {
    strategy: Strategy,
    alpha0: f64,
    step: f64,
    cap: f64,
}

impl AlphaSchedule {
    pub fn new(strategy: Strategy, alpha0: f64, step: f64, cap: f64) -> Result<Self> {
        if !(alpha0.is_finite() && alpha0 >= 0.0) {
            return Err(Error::InvalidSchedule(format!("initial alpha {alpha0} must be >= 0")));
        }
        if !(step.is_finite() && step >= 0.0) {
            return Err(Error::InvalidSchedule(format!("alpha step {step} must be >= 0")));
        }
        if !cap.is_finite() || cap < alpha0 && strategy != Strategy::Constant {
            return Err(Error::InvalidSchedule(format!("cap {cap} below initial alpha {alpha0}")));
        }
        if strategy == Strategy::Rebalance && cap >= 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "rebalance cap {cap} must stay below 1"
            )));
        }
        Ok(Self { strategy, alpha0, step, cap })
    }

    /// Default cap for the strategy: 0.99 for rebalance, 1 otherwise.
    pub fn with_default_cap(strategy: Strategy, alpha0: f64, step: f64) -> Result<Self> {
        Self::new(strategy, alpha0, step, strategy.default_cap())
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        Self::with_default_cap(Strategy::Constant, alpha, 0.0)
    }

    pub fn increase(alpha0: f64, step: f64) -> Result<Self> {
        Self::with_default_cap(Strategy::Increase, alpha0, step)
    }

    pub fn rebalance(alpha0: f64, step: f64) -> Result<Self> {
        Self::with_default_cap(Strategy::Rebalance, alpha0, step)
    }

    pub fn boundary_only(alpha: f64) -> Result<Self> {
        Self::with_default_cap(Strategy::BoundaryOnly, alpha, 0.0)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Boundary weight at `epoch`.
    pub fn alpha(&self, epoch: usize) -> f64 {
        match self.strategy {
            Strategy::Constant | Strategy::BoundaryOnly => self.alpha0,
            Strategy::Increase | Strategy::Rebalance => {
                (self.alpha0 + self.step * epoch as f64).min(self.cap)
            }
        }
    }

    /// `(w_R, w_B)` at `epoch`.
    pub fn weights(&self, epoch: usize) -> (f64, f64) {
        let alpha = self.alpha(epoch);
        match self.strategy {
            Strategy::Constant | Strategy::Increase => (1.0, alpha),
            Strategy::Rebalance => (1.0 - alpha, alpha),
            Strategy::BoundaryOnly => (0.0, alpha),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn constant_weights() {
        let s = AlphaSchedule::constant(1.0).unwrap();
        for e in [0, 7, 1000] {
            assert_eq!(s.weights(e), (1.0, 1.0));
        }
    }

    #[test]
    fn increase_after_nine_epochs() {
        let (w_r, w_b) = AlphaSchedule::increase(0.01, 0.01).unwrap().weights(9);
        assert_eq!(w_r, 1.0);
        assert!((w_b - 0.10).abs() < 1e-15);
    }

    #[test]
    fn rebalance_first_epoch() {
        assert_eq!(AlphaSchedule::rebalance(0.01, 0.01).unwrap().weights(0), (0.99, 0.01));
    }

    #[test]
    fn caps() {
        let inc = AlphaSchedule::increase(0.01, 0.01).unwrap();
        assert_eq!(inc.weights(500), (1.0, 1.0));
        let reb = AlphaSchedule::rebalance(0.01, 0.01).unwrap();
        let (w_r, w_b) = reb.weights(500);
        assert_eq!(w_b, 0.99);
        assert!(w_r > 0.0);
    }

    #[test]
    fn invalid_schedules() {
        assert!(AlphaSchedule::constant(-0.1).is_err());
        assert!(AlphaSchedule::new(Strategy::Rebalance, 0.01, 0.01, 1.0).is_err());
        assert!(AlphaSchedule::new(Strategy::Increase, 0.5, 0.01, 0.1).is_err());
        assert!("sometimes".parse::<Strategy>().is_err());
    }

    #[test]
    fn boundary_only_drops_the_regional_term() {
        assert_eq!(AlphaSchedule::boundary_only(1.0).unwrap().weights(3), (0.0, 1.0));
    }

    proptest! {
        #[test]
        fn rebalance_weights_sum_to_one_and_keep_regional_positive(
            a0 in 0.0f64..0.9, step in 0.0f64..0.5, e in 0usize..10_000
        ) {
            let s = AlphaSchedule::rebalance(a0, step).unwrap();
            let (w_r, w_b) = s.weights(e);
            prop_assert!((w_r + w_b - 1.0).abs() < 1e-12);
            prop_assert!(w_r > 0.0);
        }

        #[test]
        fn alpha_is_nondecreasing(a0 in 0.0f64..0.9, step in 0.0f64..0.5, e in 0usize..10_000) {
            for s in [AlphaSchedule::rebalance(a0, step).unwrap(), AlphaSchedule::increase(a0, step).unwrap()] {
                prop_assert!(s.alpha(e + 1) >= s.alpha(e));
            }
        }
    }
}
