use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum WeightDecay {
    #[default]
    None,
    /// Adds `lambda * theta` to the gradient before the moment updates.
    L2(f64),
    /// Shrinks parameters by `lr * lambda * theta` outside the adaptive step.
    Decoupled(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: WeightDecay,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: WeightDecay::None }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, ..AdamConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let wd = match self.weight_decay {
            WeightDecay::None => 0.0,
            WeightDecay::L2(w) | WeightDecay::Decoupled(w) => w,
        };
        if !(self.lr >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
            || !(wd >= 0.0)
        {
            return Err(Error::InvalidConfig(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Bias-corrected Adam over an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Adam<T>> {
        config.validate()?;
        Ok(Adam { config, step: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameter tensors must be passed in the same
    /// order and with the same sizes on every call.
    pub fn step(&mut self, params: &mut [(&mut [T], &[T])]) -> Result<()> {
        if self.step == 0 {
            self.m = params.iter().map(|(p, _)| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (k, (p, g)) in params.iter().enumerate() {
            if p.len() != self.m[k].len() || g.len() != p.len() {
                return Err(Error::ShapeMismatch(format!("parameter tensor {k} changed size")));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / (1.0 - c.beta1.powi(t)));
        let v_corr = T::of(1.0 / (1.0 - c.beta2.powi(t)));
        let eps = T::of(c.eps);
        let (l2, decoupled) = match c.weight_decay {
            WeightDecay::None => (T::zero(), T::zero()),
            WeightDecay::L2(w) => (T::of(w), T::zero()),
            WeightDecay::Decoupled(w) => (T::zero(), T::of(c.lr * w)),
        };
        for (k, (p, g)) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let grad = g[i] + l2 * p[i];
                m[i] = b1 * m[i] + one_b1 * grad;
                v[i] = b2 * v[i] + one_b2 * grad * grad;
                let update = step_size * m[i] / ((v[i] * v_corr).sqrt() + eps);
                p[i] = p[i] - update - decoupled * p[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(config: AdamConfig, grad: impl Fn(&[f64]) -> Vec<f64>, steps: usize) -> Vec<f64> {
        let mut theta = vec![1.0, -2.0, 0.5];
        let mut opt = Adam::new(config).unwrap();
        for _ in 0..steps {
            let g = grad(&theta);
            opt.step(&mut [(&mut theta, &g)]).unwrap();
        }
        theta
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let t = run(AdamConfig::default(), |_| vec![0.0; 3], 10);
        assert_eq!(t, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = AdamConfig { lr: 0.0, weight_decay: WeightDecay::Decoupled(0.1), ..AdamConfig::default() };
        let t = run(cfg, |th| th.iter().map(|x| 3.0 * x).collect(), 10);
        assert_eq!(t, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let lr = 0.01;
        let mut theta = vec![0.0f64];
        let mut opt = Adam::new(AdamConfig::with_lr(lr)).unwrap();
        for step in 0..200 {
            let before = theta[0];
            opt.step(&mut [(&mut theta, &[2.5])]).unwrap();
            let delta = before - theta[0];
            if step > 0 {
                assert!((delta - lr).abs() < 1e-6 * lr + 1e-9, "step {step}: {delta}");
            }
        }
    }

    #[test]
    fn weight_decay_modes() {
        let l2 = AdamConfig { weight_decay: WeightDecay::L2(0.5), ..AdamConfig::default() };
        let t = run(l2, |_| vec![0.0; 3], 1);
        // gradient is 0.5 * theta, the first step has magnitude lr
        assert!((t[0] - (1.0 - 1e-3)).abs() < 1e-9);
        let dec = AdamConfig { weight_decay: WeightDecay::Decoupled(0.5), ..AdamConfig::default() };
        let t = run(dec, |_| vec![0.0; 3], 1);
        assert!((t[0] - (1.0 - 1e-3 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_checked() {
        let quad = |th: &[f64]| th.iter().map(|x| x - 0.3).collect::<Vec<_>>();
        assert_eq!(run(AdamConfig::default(), quad, 50), run(AdamConfig::default(), quad, 50));
        let mut opt = Adam::<f64>::new(AdamConfig::default()).unwrap();
        let mut a = vec![0.0; 2];
        opt.step(&mut [(&mut a, &[1.0, 1.0])]).unwrap();
        let mut b = vec![0.0; 3];
        assert!(opt.step(&mut [(&mut b, &[1.0; 3])]).is_err());
        assert!(Adam::<f64>::new(AdamConfig { beta1: 1.0, ..AdamConfig::default() }).is_err());
        assert!(Adam::<f64>::new(AdamConfig { lr: -1.0, ..AdamConfig::default() }).is_err());
    }
}
