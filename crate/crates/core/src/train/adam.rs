use crate::nn::{Dense, Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub params: AdamParams,
    pub(crate) m: Vec<Dense>,
    pub(crate) v: Vec<Dense>,
    pub(crate) t: u64,
}

impl Adam {
    pub fn new(net: &Network, params: AdamParams) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        Adam {
            params,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.t += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, g), m), v) in p.params_mut().zip(g.params()).zip(m.params_mut()).zip(v.params_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelConfig, Variant};

    /// One-parameter network view: the bias of the first layer.
    fn scalar_setup() -> (Network, Gradients) {
        let mut c = ModelConfig::for_variant(Variant::Vae, 1);
        c.hidden_sizes = vec![];
        c.latent_dim = 1;
        let net = Network::zeros(c).unwrap();
        let grads = Gradients::zeros_like(&net);
        (net, grads)
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let (mut net, mut grads) = scalar_setup();
        net.layers_mut()[0].bias[0] = 1.0;
        let p = AdamParams {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut adam = Adam::new(&net, p);

        // Step 1, g = 2: m = 0.2, v = 0.004, m_hat = 2, v_hat = 4,
        // update = 0.1 * 2 / (2 + 1e-8).
        grads.layers[0].bias[0] = 2.0;
        adam.step(&mut net, &grads);
        let expected1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((net.layers()[0].bias[0] - expected1).abs() < 1e-15);

        // Step 2, g = -1: m = 0.9*0.2 - 0.1 = 0.08, v = 0.999*0.004 + 0.001 = 0.004996,
        // m_hat = 0.08 / 0.19, v_hat = 0.004996 / 0.001999.
        grads.layers[0].bias[0] = -1.0;
        adam.step(&mut net, &grads);
        let m_hat: f64 = 0.08 / (1.0 - 0.81);
        let v_hat: f64 = 0.004996 / (1.0 - 0.998001);
        let expected2 = expected1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((net.layers()[0].bias[0] - expected2).abs() < 1e-12);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut net, grads) = scalar_setup();
        let before = net.clone();
        let mut adam = Adam::new(&net, AdamParams::default());
        adam.step(&mut net, &grads);
        assert_eq!(net, before);
    }
}
