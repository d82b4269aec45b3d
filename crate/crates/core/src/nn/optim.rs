use super::{Gradients, Matrix, Network, NnError};

/// Piecewise-linear multiplier over epochs. Constant beyond the first and last
/// points; an empty schedule is the constant 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    points: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant() -> Self {
        Schedule::default()
    }

    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, NnError> {
        if points
            .iter()
            .any(|&(e, m)| !e.is_finite() || !m.is_finite() || m < 0.0)
        {
            return Err(NnError::Parameter(
                "schedule points need finite epochs and multipliers >= 0".into(),
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(NnError::Parameter("schedule has duplicate epochs".into()));
        }
        Ok(Schedule { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let e = epoch as f64;
        match self.points.as_slice() {
            [] => 1.0,
            [(_, m)] => *m,
            points => {
                let first = points[0];
                let last = points[points.len() - 1];
                if e <= first.0 {
                    return first.1;
                }
                if e >= last.0 {
                    return last.1;
                }
                let i = points.partition_point(|p| p.0 <= e);
                let (e0, m0) = points[i - 1];
                let (e1, m1) = points[i];
                m0 + (m1 - m0) * (e - e0) / (e1 - e0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub learning_rate_schedule: Schedule,
    pub momentum_schedule: Schedule,
    pub weight_decay_schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            learning_rate_schedule: Schedule::constant(),
            momentum_schedule: Schedule::constant(),
            weight_decay_schedule: Schedule::constant(),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }

    /// A zero learning rate is accepted so that training can be frozen.
    pub fn validate(&self) -> Result<(), NnError> {
        if !(0.0..1.0).contains(&self.learning_rate) {
            return Err(NnError::Parameter(format!(
                "learning rate {} outside [0, 1)",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::Parameter(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NnError::Parameter(format!(
                "weight decay {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.learning_rate_schedule.at(epoch)
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        self.momentum * self.momentum_schedule.at(epoch)
    }

    pub fn weight_decay_at(&self, epoch: usize) -> f64 {
        self.weight_decay * self.weight_decay_schedule.at(epoch)
    }
}

/// Momentum buffers, one per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<(Matrix, Vec<f64>)>,
}

impl OptimizerState {
    pub fn new(net: &Network) -> Self {
        OptimizerState {
            velocity: net
                .layers()
                .iter()
                .map(|l| {
                    let (r, c) = l.weights.shape();
                    (Matrix::zeros(r, c), vec![0.0; l.biases.len()])
                })
                .collect(),
        }
    }
}

/// `v = momentum * v - rate * (grad + decay * param)`, then `param += v`.
/// Weight decay does not touch biases.
pub fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<(), NnError> {
    if grads.layers.len() != net.layers().len() || state.velocity.len() != net.layers().len() {
        return Err(NnError::Dimension(
            "gradients or optimizer state do not match the network".into(),
        ));
    }
    for (layer, grad) in net.layers().iter().zip(&grads.layers) {
        if layer.weights.shape() != grad.weights.shape() || layer.biases.len() != grad.biases.len()
        {
            return Err(NnError::Dimension(
                "gradient shape differs from parameters".into(),
            ));
        }
    }
    let rate = config.learning_rate_at(epoch);
    let momentum = config.momentum_at(epoch);
    let decay = config.weight_decay_at(epoch);
    for ((layer, grad), (vw, vb)) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.velocity)
    {
        for ((w, g), v) in layer
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(grad.weights.as_slice())
            .zip(vw.as_mut_slice())
        {
            *v = momentum * *v - rate * (g + decay * *w);
            *w += *v;
        }
        for ((b, g), v) in layer.biases.iter_mut().zip(&grad.biases).zip(vb.iter_mut()) {
            *v = momentum * *v - rate * g;
            *b += *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, InitSpec, LayerGradient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        Network::new(
            &[3, 2],
            &[Activation::Linear],
            InitSpec::Normal { sigma: 1.0 },
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap()
    }

    fn constant_grad(net: &Network, g: f64) -> Gradients {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: l.weights.map(|_| g),
                    biases: vec![g; l.biases.len()],
                })
                .collect(),
            input: Matrix::zeros(1, net.in_size()),
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut n = net();
        let before = n.clone();
        let mut state = OptimizerState::new(&n);
        let grads = constant_grad(&n, 0.5);
        sgd_step(&mut n, &grads, &OptimizerConfig::sgd(0.1), &mut state, 0).unwrap();
        for (a, b) in n.layers()[0]
            .weights
            .as_slice()
            .iter()
            .zip(before.layers()[0].weights.as_slice())
        {
            assert!((a - (b - 0.05)).abs() < 1e-15);
        }
        assert!(n.layers()[0]
            .biases
            .iter()
            .all(|&b| (b + 0.05).abs() < 1e-15));
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut n = net();
        let before = n.clone();
        let mut state = OptimizerState::new(&n);
        let grads = constant_grad(&n, 0.0);
        sgd_step(&mut n, &grads, &OptimizerConfig::sgd(0.1), &mut state, 0).unwrap();
        assert_eq!(n, before);
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut n = net();
        let before = n.clone();
        let mut state = OptimizerState::new(&n);
        let config = OptimizerConfig {
            learning_rate: 0.0,
            momentum: 0.9,
            weight_decay: 0.1,
            ..Default::default()
        };
        for epoch in 0..3 {
            let grads = constant_grad(&n, 1.0);
            sgd_step(&mut n, &grads, &config, &mut state, epoch).unwrap();
        }
        assert_eq!(n, before);
    }

    #[test]
    fn momentum_two_steps() {
        let mut n = net();
        for l in n.layers_mut() {
            l.weights = l.weights.map(|_| 0.0);
        }
        let g = 2.0;
        let mut state = OptimizerState::new(&n);
        let config = OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            ..Default::default()
        };
        for epoch in 0..2 {
            let grads = constant_grad(&n, g);
            sgd_step(&mut n, &grads, &config, &mut state, epoch).unwrap();
        }
        for &w in n.layers()[0].weights.as_slice() {
            assert!((w - (-0.29 * g)).abs() < 1e-12, "{w}");
        }
    }

    #[test]
    fn weight_decay_skips_biases() {
        let mut n = net();
        n.layers_mut()[0].biases = vec![1.0, 1.0];
        let before = n.clone();
        let mut state = OptimizerState::new(&n);
        let config = OptimizerConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let grads = constant_grad(&n, 0.0);
        sgd_step(&mut n, &grads, &config, &mut state, 0).unwrap();
        assert_eq!(n.layers()[0].biases, vec![1.0, 1.0]);
        for (a, b) in n.layers()[0]
            .weights
            .as_slice()
            .iter()
            .zip(before.layers()[0].weights.as_slice())
        {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_interpolates() {
        let s = Schedule::new(vec![(10.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(5), 0.5);
        assert_eq!(s.at(20), 0.0);
        assert_eq!(Schedule::constant().at(7), 1.0);
        assert!(Schedule::new(vec![(0.0, -1.0)]).is_err());
        let config = OptimizerConfig {
            learning_rate: 0.2,
            learning_rate_schedule: s,
            ..Default::default()
        };
        assert!((config.learning_rate_at(5) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_guards() {
        assert!(OptimizerConfig::sgd(1.5).validate().is_err());
        assert!(OptimizerConfig::sgd(0.0).validate().is_ok());
        let bad = OptimizerConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
