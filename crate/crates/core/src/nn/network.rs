use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Matrix, NnError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(NnError::Parameter(format!(
                "unknown activation '{other}' (expected sigmoid, relu or linear)"
            ))),
        }
    }
}

/// How fresh weights are drawn. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitSpec {
    Normal { sigma: f64 },
    Uniform { half_width: f64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Normal { sigma: 0.01 }
    }
}

impl InitSpec {
    fn validate(&self) -> Result<(), NnError> {
        let scale = match *self {
            InitSpec::Normal { sigma } => sigma,
            InitSpec::Uniform { half_width } => half_width,
        };
        if scale.is_finite() && scale >= 0.0 {
            Ok(())
        } else {
            Err(NnError::Parameter(format!("invalid init scale {scale}")))
        }
    }

    fn fill<R: Rng + ?Sized>(&self, values: &mut [f64], rng: &mut R) {
        match *self {
            InitSpec::Normal { sigma } => {
                let dist = Normal::new(0.0, sigma).expect("validated scale");
                values.iter_mut().for_each(|v| *v = dist.sample(rng));
            }
            InitSpec::Uniform { half_width } if half_width > 0.0 => {
                let dist = Uniform::new_inclusive(-half_width, half_width);
                values.iter_mut().for_each(|v| *v = dist.sample(rng));
            }
            InitSpec::Uniform { .. } => values.iter_mut().for_each(|v| *v = 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
    /// Probability of dropping each input unit of this layer during training.
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn in_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_size(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
enum DropoutRecord {
    None,
    Mask(Matrix),
    Scale(f64),
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    version: u64,
    /// Layer inputs after dropout was applied.
    inputs: Vec<Matrix>,
    dropout: Vec<DropoutRecord>,
    /// Post-activation outputs per layer.
    outputs: Vec<Matrix>,
}

impl ForwardRecord {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("network has at least one layer")
    }

    pub fn layer_outputs(&self) -> &[Matrix] {
        &self.outputs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Gradients of a scalar loss with respect to every parameter and the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Matrix,
}

/// Feed-forward multilayer perceptron.
///
/// `version` changes on every parameter mutation so that a [`ForwardRecord`]
/// taken before an update is rejected by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<DenseLayer>,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// `sizes` lists every layer width including the input; `activations` has one
    /// entry per weight layer.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        init: InitSpec,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Parameter(format!(
                "a network needs at least two layer sizes, got {}",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(NnError::Parameter("layer sizes must be positive".into()));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(NnError::Parameter(format!(
                "{} activations given for {} weight layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        init.validate()?;
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let mut weights = Matrix::zeros(w[1], w[0]);
                init.fill(weights.as_mut_slice(), rng);
                DenseLayer {
                    weights,
                    biases: vec![0.0; w[1]],
                    activation,
                    dropout_rate: 0.0,
                }
            })
            .collect();
        Ok(Network { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Parameter(
                "a network needs at least one layer".into(),
            ));
        }
        for (t, pair) in layers.windows(2).enumerate() {
            if pair[0].out_size() != pair[1].in_size() {
                return Err(NnError::Dimension(format!(
                    "layer {t} outputs {} units but layer {} expects {}",
                    pair[0].out_size(),
                    t + 1,
                    pair[1].in_size()
                )));
            }
        }
        for layer in &layers {
            if layer.biases.len() != layer.out_size() {
                return Err(NnError::Dimension(
                    "bias length differs from layer width".into(),
                ));
            }
            check_dropout(layer.dropout_rate)?;
        }
        Ok(Network { layers, version: 0 })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding forward records.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn in_size(&self) -> usize {
        self.layers[0].in_size()
    }

    pub fn out_size(&self) -> usize {
        self.layers[self.layers.len() - 1].out_size()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.biases.len())
            .sum()
    }

    pub fn set_dropout(&mut self, layer: usize, rate: f64) -> Result<(), NnError> {
        check_dropout(rate)?;
        let count = self.layers.len();
        let target = self.layers.get_mut(layer).ok_or_else(|| {
            NnError::Parameter(format!("layer {layer} does not exist ({count} layers)"))
        })?;
        target.dropout_rate = rate;
        self.version += 1;
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardRecord, NnError> {
        if input.cols() != self.in_size() {
            return Err(NnError::Dimension(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.in_size()
            )));
        }
        let depth = self.layers.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut dropout = Vec::with_capacity(depth);
        let mut outputs: Vec<Matrix> = Vec::with_capacity(depth);
        for (t, layer) in self.layers.iter().enumerate() {
            let raw = if t == 0 { input } else { &outputs[t - 1] };
            let (x, record) = if layer.dropout_rate == 0.0 {
                (raw.clone(), DropoutRecord::None)
            } else {
                match mode {
                    Mode::Train => {
                        let keep = 1.0 - layer.dropout_rate;
                        let mut mask = Matrix::zeros(raw.rows(), raw.cols());
                        for m in mask.as_mut_slice() {
                            *m = if rng.gen::<f64>() < keep { 1.0 } else { 0.0 };
                        }
                        (raw.hadamard(&mask), DropoutRecord::Mask(mask))
                    }
                    Mode::Infer => {
                        let keep = 1.0 - layer.dropout_rate;
                        (raw.scale(keep), DropoutRecord::Scale(keep))
                    }
                }
            };
            let mut y = x.mul_transposed(&layer.weights);
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(&layer.biases) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            if !y.is_finite() {
                return Err(NnError::Numeric(format!(
                    "non-finite activation in layer {t}"
                )));
            }
            inputs.push(x);
            dropout.push(record);
            outputs.push(y);
        }
        Ok(ForwardRecord {
            version: self.version,
            inputs,
            dropout,
            outputs,
        })
    }

    /// Inference-mode forward pass returning only the output layer.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NnError> {
        // infer mode never draws random numbers
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        let mut record = self.forward(input, Mode::Infer, &mut unused)?;
        Ok(record.outputs.pop().expect("at least one layer"))
    }

    /// Backpropagates `output_gradient` (dLoss/dOutput, shaped like the output
    /// batch) through the pass described by `record`.
    pub fn backward(
        &self,
        record: &ForwardRecord,
        output_gradient: &Matrix,
    ) -> Result<Gradients, NnError> {
        if record.version != self.version || record.outputs.len() != self.layers.len() {
            return Err(NnError::Usage(
                "forward record does not belong to the current network parameters".into(),
            ));
        }
        if output_gradient.shape() != record.output().shape() {
            return Err(NnError::Dimension(format!(
                "output gradient is {:?}, network output is {:?}",
                output_gradient.shape(),
                record.output().shape()
            )));
        }
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_gradient.clone();
        for (t, layer) in self.layers.iter().enumerate().rev() {
            let y = &record.outputs[t];
            let mut delta = upstream;
            for (d, &out) in delta.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *d *= layer.activation.derivative_from_output(out);
            }
            let weights = delta.transposed_mul(&record.inputs[t]);
            let biases = delta.column_sums();
            let mut dx = delta.mul(&layer.weights);
            match &record.dropout[t] {
                DropoutRecord::None => {}
                DropoutRecord::Mask(mask) => dx = dx.hadamard(mask),
                DropoutRecord::Scale(keep) => dx = dx.scale(*keep),
            }
            layer_grads.push(LayerGradient { weights, biases });
            upstream = dx;
        }
        layer_grads.reverse();
        if !upstream.is_finite() || layer_grads.iter().any(|g| !g.weights.is_finite()) {
            return Err(NnError::Numeric("non-finite gradient".into()));
        }
        Ok(Gradients {
            layers: layer_grads,
            input: upstream,
        })
    }
}

fn check_dropout(rate: f64) -> Result<(), NnError> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(NnError::Parameter(format!(
            "dropout rate {rate} outside [0, 1)"
        )))
    }
}
