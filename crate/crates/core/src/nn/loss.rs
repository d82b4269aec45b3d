/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logarithms.
pub const PROBABILITY_EPSILON: f64 = 1e-12;

#[inline]
pub fn clamp_probability(y: f64) -> f64 {
    y.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
}

/// Binary cross-entropy `-[t ln y + (1 - t) ln(1 - y)]`.
#[inline]
pub fn cross_entropy_loss(y: f64, t: f64) -> f64 {
    let y = clamp_probability(y);
    -(t * y.ln() + (1.0 - t) * (1.0 - y).ln())
}

/// dLoss/dy of [`cross_entropy_loss`] at the clamped probability.
#[inline]
pub fn cross_entropy_gradient(y: f64, t: f64) -> f64 {
    let y = clamp_probability(y);
    -t / y + (1.0 - t) / (1.0 - y)
}

/// Generator loss `ln(1 - y)` where `y` is the discriminator's verdict on a fake.
#[inline]
pub fn generator_loss(y: f64) -> f64 {
    (1.0 - clamp_probability(y)).ln()
}

#[inline]
pub fn generator_loss_gradient(y: f64) -> f64 {
    -1.0 / (1.0 - clamp_probability(y))
}
