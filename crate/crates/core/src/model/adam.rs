use crate::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments, lr 0.001, betas (0.9, 0.999), eps 1e-8.
    pub fn new(n_params: usize) -> Self {
        Self::with_lr(n_params, 1e-3)
    }

    pub fn with_lr(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of `params` in place. Nothing is modified when a gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Learning rate after the latest entry of a validation-score history.
///
/// An epoch is "bad" when it does not strictly beat the best score seen
/// before it. The rate is halved each time the run of bad epochs since the
/// last improvement reaches a multiple of `patience`, which is what a
/// stateful reduce-on-plateau rule that resets its counter after each
/// reduction does.
pub fn lr_on_plateau(history: &[f64], lr: f64, patience: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut bad = 0;
    for &score in history {
        if score > best {
            best = score;
            bad = 0;
        } else {
            bad += 1;
        }
    }
    if patience > 0 && bad > 0 && bad % patience == 0 {
        lr * 0.5
    } else {
        lr
    }
}

/// Incremental form of [`lr_on_plateau`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    patience: usize,
    best: f64,
    bad: usize,
}

impl PlateauSchedule {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::NEG_INFINITY, bad: 0 }
    }

    /// Record one epoch's score and return the rate to use next.
    pub fn observe(&mut self, score: f64, lr: f64) -> f64 {
        if score > self.best {
            self.best = score;
            self.bad = 0;
            return lr;
        }
        self.bad += 1;
        if self.patience > 0 && self.bad >= self.patience {
            self.bad = 0;
            lr * 0.5
        } else {
            lr
        }
    }
}
