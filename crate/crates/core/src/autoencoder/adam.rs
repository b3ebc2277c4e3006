//! Adam with bias-corrected moments.

/// First/second moment estimates for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments for tensors of the given lengths; step counter 0.
    pub fn new(lengths: &[usize]) -> Self {
        Self {
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update:
    ///
    /// ```text
    /// m <- b1 m + (1 - b1) g
    /// v <- b2 v + (1 - b2) g^2
    /// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    /// ```
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], hp: AdamHyper) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - hp.beta1.powi(t);
        let c2 = 1.0 - hp.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len());
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
                v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HP: AdamHyper = AdamHyper {
        learning_rate: 0.001,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = AdamState::new(&[1]);
        let mut p = [2.0];
        state.step(&mut [&mut p[..]], &[&[1.0]], HP);
        // m_hat / sqrt(v_hat) = 1 at t = 1, up to eps.
        assert!((2.0 - p[0] - 0.001).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::new(&[3]);
        let mut p = [1.0, -2.0, 0.5];
        for _ in 0..100 {
            state.step(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0]], HP);
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(state.steps(), 100);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut state = AdamState::new(&[2]);
            let mut p = [0.3, -0.1];
            let mut traj = Vec::new();
            for k in 0..50 {
                let g = [p[0] - 1.0 + 0.01 * k as f64, 2.0 * p[1]];
                state.step(&mut [&mut p[..]], &[&g[..]], HP);
                traj.push(p);
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut state = AdamState::new(&[1]);
        let mut p = [3.0];
        let hp = AdamHyper {
            learning_rate: 0.05,
            ..HP
        };
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            state.step(&mut [&mut p[..]], &[&g[..]], hp);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
