//! Adaptive-moment (Adam) optimiser over flat parameter blocks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 9e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// `shapes` holds the length of every parameter block.
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every block.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        check_dim("parameter blocks", self.m.len(), params.len())?;
        check_dim("gradient blocks", self.m.len(), grads.len())?;
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            check_dim("parameter block", m.len(), p.len())?;
            check_dim("gradient block", m.len(), g.len())?;
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.learning_rate * m_hat / (linalg::sqrt(v_hat) + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = [1.0, -1.0];
        opt.update(&mut [&mut p[..]], &[vec![3.0, -0.5]]).unwrap();
        assert!((p[0] - (1.0 - 9e-4)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 9e-4)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = Adam::new(AdamConfig::default(), &[3]).unwrap();
        let mut p = [0.5, 0.25, -2.0];
        for _ in 0..5 {
            opt.update(&mut [&mut p[..]], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p, [0.5, 0.25, -2.0]);
    }

    #[test]
    fn minimises_a_quadratic() {
        let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &[1]).unwrap();
        let mut x = [4.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.5)];
            opt.update(&mut [&mut x[..]], &[g]).unwrap();
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_rate_and_shapes() {
        assert!(Adam::new(AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, &[1]).is_err());
        let mut opt = Adam::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = [0.0];
        assert!(opt.update(&mut [&mut p[..]], &[vec![0.0]]).is_err());
    }
}
