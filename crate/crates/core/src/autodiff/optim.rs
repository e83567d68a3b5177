use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam or plain gradient descent over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    clip_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {learning_rate} must be > 0")));
        }
        let buffers = if matches!(kind, OptimizerKind::Adam { .. }) { num_params } else { 0 };
        Ok(Self {
            kind,
            learning_rate,
            clip_norm: None,
            m: vec![0.0; buffers],
            v: vec![0.0; buffers],
            steps: 0,
        })
    }

    pub fn adam(learning_rate: f64, num_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::adam(), learning_rate, num_params)
    }

    pub fn sgd(learning_rate: f64, num_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, num_params)
    }

    /// Rescales gradients whose global ℓ² norm exceeds `max_norm`.
    pub fn with_clip(mut self, max_norm: Option<f64>) -> Self {
        self.clip_norm = max_norm;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One in-place update. A NaN or infinite gradient aborts the step and
    /// leaves both parameters and state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.learning_rate * scale * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.len() != params.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.m.len(),
                        got: params.len(),
                    });
                }
                let t = (self.steps + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i] * scale;
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Optimizer::adam(1e-2, 3).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut opt = Optimizer::adam(0.01, 2).unwrap();
        let mut p = vec![1.0, 1.0];
        opt.step(&mut p, &[3.0, -0.2]).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
        assert!((p[0] - (1.0 - 0.01 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (1.0 + 0.01 * 0.2 / (0.2 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = Optimizer::adam(0.01, 2).unwrap();
        let mut pa = vec![0.3, 0.3];
        for _ in 0..5 {
            a.step(&mut pa, &[0.7, 0.7]).unwrap();
        }
        assert_eq!(pa[0], pa[1]);
    }

    #[test]
    fn nan_gradient_aborts_step() {
        let mut opt = Optimizer::adam(0.01, 2).unwrap();
        let mut p = vec![1.0, 2.0];
        assert!(matches!(opt.step(&mut p, &[0.1, f64::NAN]), Err(Error::NonFiniteGradient(1))));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(opt.steps(), 0);
        assert!(opt.step(&mut p, &[0.1]).is_err());
    }

    #[test]
    fn sgd_with_clip() {
        let mut opt = Optimizer::sgd(0.1, 2).unwrap().with_clip(Some(1.0));
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, 4.0]).unwrap();
        assert!((p[0] + 0.06).abs() < 1e-15 && (p[1] + 0.08).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(Optimizer::adam(0.0, 1).is_err());
        assert!(Optimizer::sgd(-1.0, 1).is_err());
    }
}
