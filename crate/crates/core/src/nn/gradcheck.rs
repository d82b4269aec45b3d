//! Central finite-difference verification of backpropagated gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    cross_entropy_gradient, cross_entropy_loss, Activation, InitSpec, Matrix, Mode, Network,
    NnError,
};

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;

/// Gradient magnitudes below this are compared on an absolute scale; central
/// differences cannot resolve them relative to their own size.
const RELATIVE_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Scalar loss of a network's output batch together with dLoss/dOutput.
pub type LossFn<'a> = dyn Fn(&Matrix) -> Result<(f64, Matrix), NnError> + 'a;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientComparison {
    pub checked: usize,
    /// Entries whose +-h probes switched a ReLU on or off; the loss is not
    /// differentiable across the kink, so they are left out.
    pub skipped: usize,
    pub max_relative_error: f64,
}

/// Loss of `net` on `x` and which ReLU units are active.
fn probe_loss(net: &Network, x: &Matrix, loss: &LossFn<'_>) -> Result<(f64, Vec<bool>), NnError> {
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    let record = net.forward(x, Mode::Infer, &mut unused)?;
    let pattern = net
        .layers()
        .iter()
        .zip(record.layer_outputs())
        .filter(|(layer, _)| layer.activation == Activation::Relu)
        .flat_map(|(_, out)| out.as_slice().iter().map(|&v| v > 0.0))
        .collect();
    Ok((loss(record.output())?.0, pattern))
}

/// Compares backprop against central differences for every weight, bias and
/// input entry. Dropout must be off for the comparison to be meaningful.
pub fn check_network(
    net: &Network,
    input: &Matrix,
    loss: &LossFn<'_>,
) -> Result<GradientComparison, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let record = net.forward(input, Mode::Train, &mut rng)?;
    let (_, output_grad) = loss(record.output())?;
    let grads = net.backward(&record, &output_grad)?;
    let (_, base_pattern) = probe_loss(net, input, loss)?;

    let h = FINITE_DIFFERENCE_STEP;
    let mut result = GradientComparison {
        checked: 0,
        skipped: 0,
        max_relative_error: 0.0,
    };
    let mut compare = |analytic: f64, up: (f64, Vec<bool>), down: (f64, Vec<bool>)| {
        if up.1 != base_pattern || down.1 != base_pattern {
            result.skipped += 1;
            return;
        }
        let numeric = (up.0 - down.0) / (2.0 * h);
        result.max_relative_error = result
            .max_relative_error
            .max(relative_error(analytic, numeric));
        result.checked += 1;
    };
    let mut probe = net.clone();
    for t in 0..net.layers().len() {
        let n_weights = net.layers()[t].weights.as_slice().len();
        for i in 0..n_weights + net.layers()[t].biases.len() {
            let original = if i < n_weights {
                net.layers()[t].weights.as_slice()[i]
            } else {
                net.layers()[t].biases[i - n_weights]
            };
            let set = |probe: &mut Network, v: f64| {
                let layer = &mut probe.layers_mut()[t];
                if i < n_weights {
                    layer.weights.as_mut_slice()[i] = v;
                } else {
                    layer.biases[i - n_weights] = v;
                }
            };
            set(&mut probe, original + h);
            let up = probe_loss(&probe, input, loss)?;
            set(&mut probe, original - h);
            let down = probe_loss(&probe, input, loss)?;
            set(&mut probe, original);
            let analytic = if i < n_weights {
                grads.layers[t].weights.as_slice()[i]
            } else {
                grads.layers[t].biases[i - n_weights]
            };
            compare(analytic, up, down);
        }
    }
    let mut shifted = input.clone();
    for i in 0..input.as_slice().len() {
        let original = input.as_slice()[i];
        shifted.as_mut_slice()[i] = original + h;
        let up = probe_loss(net, &shifted, loss)?;
        shifted.as_mut_slice()[i] = original - h;
        let down = probe_loss(net, &shifted, loss)?;
        shifted.as_mut_slice()[i] = original;
        compare(grads.input.as_slice()[i], up, down);
    }
    Ok(result)
}

/// Summed cross-entropy of sigmoid outputs against fixed binary targets.
pub fn cross_entropy_against(
    targets: Matrix,
) -> impl Fn(&Matrix) -> Result<(f64, Matrix), NnError> {
    move |output: &Matrix| {
        if output.shape() != targets.shape() {
            return Err(NnError::Dimension(
                "target shape differs from output".into(),
            ));
        }
        let mut grad = Matrix::zeros(output.rows(), output.cols());
        let mut total = 0.0;
        for ((g, &y), &t) in grad
            .as_mut_slice()
            .iter_mut()
            .zip(output.as_slice())
            .zip(targets.as_slice())
        {
            total += cross_entropy_loss(y, t);
            *g = cross_entropy_gradient(y, t);
        }
        Ok((total, grad))
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub configurations: usize,
    pub parameters_checked: usize,
    pub kinks_skipped: usize,
    /// Draws discarded for a saturated output.
    pub redrawn: usize,
    pub max_relative_error: f64,
    pub worst_configuration: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= MAX_RELATIVE_ERROR
    }
}

/// Outputs closer than this to 0 or 1 make `ln(1 - y)` lose most of its
/// digits, and a central difference of the loss is then rounding noise.
const SATURATION_MARGIN: f64 = 1e-3;

struct Draw {
    net: Network,
    input: Matrix,
    targets: Matrix,
    description: String,
}

fn draw_configuration(rng: &mut ChaCha8Rng, index: usize) -> Result<Draw, NnError> {
    let hidden_kinds = [Activation::Relu, Activation::Sigmoid, Activation::Linear];
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..=8)];
    let mut activations = Vec::new();
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=8));
        activations.push(hidden_kinds[rng.gen_range(0..hidden_kinds.len())]);
    }
    sizes.push(rng.gen_range(1..=4));
    activations.push(Activation::Sigmoid);
    let init = InitSpec::Normal {
        sigma: rng.gen_range(0.2..1.0),
    };
    let mut net = Network::new(&sizes, &activations, init, rng)?;
    for layer in net.layers_mut() {
        for b in &mut layer.biases {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let batch = rng.gen_range(1..=4);
    let input = Matrix::from_vec(
        batch,
        sizes[0],
        (0..batch * sizes[0])
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )?;
    let out = *sizes.last().unwrap();
    let targets = Matrix::from_vec(
        batch,
        out,
        (0..batch * out)
            .map(|_| rng.gen_range(0..=1) as f64)
            .collect(),
    )?;
    Ok(Draw {
        net,
        input,
        targets,
        description: format!(
            "#{index}: sizes {sizes:?}, activations {activations:?}, batch {batch}"
        ),
    })
}

/// Random MLPs (1-3 hidden layers of mixed activations, sigmoid output,
/// cross-entropy loss, dropout off) checked against finite differences.
/// Draws with a saturated output are replaced by a fresh draw.
pub fn run_suite(configurations: usize, seed: u64) -> Result<SuiteReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport {
        configurations,
        parameters_checked: 0,
        kinks_skipped: 0,
        redrawn: 0,
        max_relative_error: 0.0,
        worst_configuration: String::new(),
    };
    for c in 0..configurations {
        let draw = loop {
            let draw = draw_configuration(&mut rng, c)?;
            let saturated = draw
                .net
                .predict(&draw.input)?
                .as_slice()
                .iter()
                .any(|&y| !(SATURATION_MARGIN..=1.0 - SATURATION_MARGIN).contains(&y));
            if !saturated {
                break draw;
            }
            report.redrawn += 1;
        };
        let result = check_network(&draw.net, &draw.input, &cross_entropy_against(draw.targets))?;
        report.parameters_checked += result.checked;
        report.kinks_skipped += result.skipped;
        if result.max_relative_error > report.max_relative_error {
            report.max_relative_error = result.max_relative_error;
            report.worst_configuration = draw.description;
        }
    }
    Ok(report)
}
