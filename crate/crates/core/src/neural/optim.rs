use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    SgdMomentum { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Moment buffers, lazily sized on the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer) -> Self {
        Self {
            kind,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            if matches!(self.kind, Optimizer::Adam { .. }) {
                self.v = self.m.clone();
            }
        }
        self.t += 1;
        match self.kind {
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.t as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let mh = m[j] / c1;
                        let vh = v[j] / c2;
                        p[j] -= lr * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
            Optimizer::SgdMomentum { momentum } => {
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let vel = &mut self.m[k];
                    for j in 0..p.len() {
                        vel[j] = momentum * vel[j] - lr * g[j];
                        p[j] += vel[j];
                    }
                }
            }
        }
    }
}
