//! MLP forward/backward with optional inverted dropout and a bounded
//! negative log-likelihood loss.
//!
//! The loss bound B is enforced structurally: predicted probabilities are
//! shrunk linearly toward the simplex interior, `q_i = (1 - k*p_min)*p_i +
//! p_min` with `p_min = e^{-B}`, which keeps them in
//! `[p_min, 1 - (k-1)*p_min]`, preserves the sum at 1, and caps the NLL at
//! exactly B. All bound formulas downstream rely on this invariant.

use crate::error::{Error, Result};
use crate::matrix::Matrix2D;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation u.
    fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Forward-pass mode: `Train` applies dropout masks, `Eval` never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully-connected architecture: input, hidden layers, output (class count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
    dropout_rate: f64,
}

/// Shape and flat-vector offsets of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the row-major weight block in theta.
    pub w_offset: usize,
    /// Offset of the bias block in theta.
    pub b_offset: usize,
}

impl MlpArchitecture {
    /// `layer_sizes` lists input, hidden..., output widths. Output size is the
    /// class count and must be at least 2; dropout applies to hidden layers.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, dropout_rate: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "architecture needs at least input and output layers, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                layer_sizes
            )));
        }
        let classes = *layer_sizes.last().expect("len checked above");
        if classes < 2 {
            return Err(Error::Config(format!(
                "output layer needs at least 2 classes, got {classes}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        Ok(MlpArchitecture {
            layer_sizes,
            activation,
            dropout_rate,
        })
    }

    /// Two hidden layers of 64 and 32 units.
    pub fn default_hidden(input_size: usize, classes: usize, activation: Activation) -> Result<Self> {
        MlpArchitecture::new(vec![input_size, 64, 32, classes], activation, 0.0)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated nonempty")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Returns a copy with a different dropout rate (same sizes/activation).
    pub fn with_dropout(&self, rate: f64) -> Result<Self> {
        MlpArchitecture::new(self.layer_sizes.clone(), self.activation, rate)
    }

    /// Number of dense layers (weight matrices).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Layer shapes in serialization order: per layer, weights row-major
    /// (fan_out rows x fan_in cols) then biases.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            shapes.push(LayerShape {
                fan_in,
                fan_out,
                w_offset: offset,
                b_offset: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        shapes
    }
}

/// Flat parameter vector theta plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: MlpArchitecture,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(arch: MlpArchitecture, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "theta length {} does not match architecture parameter count {}",
                theta.len(),
                arch.param_count()
            )));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in theta".into()));
        }
        Ok(ModelParams { arch, theta })
    }

    pub fn zeros(arch: MlpArchitecture) -> Self {
        let n = arch.param_count();
        ModelParams {
            arch,
            theta: vec![0.0; n],
        }
    }

    /// Per-layer uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at 0.
    /// Weights are drawn in serialization order, so the draw is reproducible.
    pub fn xavier_init(arch: MlpArchitecture, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; arch.param_count()];
        for shape in arch.layer_shapes() {
            let a = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
            for w in &mut theta[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out] {
                *w = rng.random_range(-a..a);
            }
        }
        ModelParams { arch, theta }
    }

    /// Copy of layer `l`'s weight block as a (fan_out x fan_in) matrix.
    pub fn weight_matrix(&self, l: usize) -> Result<Matrix2D> {
        let shapes = self.arch.layer_shapes();
        let shape = shapes
            .get(l)
            .ok_or_else(|| Error::Index(format!("layer {l} of {}", shapes.len())))?;
        Matrix2D::new(
            shape.fan_out,
            shape.fan_in,
            self.theta[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out].to_vec(),
        )
    }

    /// Bias block of layer `l`.
    pub fn bias_slice(&self, l: usize) -> Result<&[f64]> {
        let shapes = self.arch.layer_shapes();
        let shape = shapes
            .get(l)
            .ok_or_else(|| Error::Index(format!("layer {l} of {}", shapes.len())))?;
        Ok(&self.theta[shape.b_offset..shape.b_offset + shape.fan_out])
    }
}

/// One labeled record z = (x, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Sample { x, y }
    }
}

/// Uniform bound B on the per-sample NLL, realized by probability clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBound {
    b: f64,
    p_min: f64,
}

impl LossBound {
    /// Requires B > ln 2 so that p_min = e^{-B} < 0.5.
    pub fn new(b: f64) -> Result<Self> {
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::Config(format!("loss bound must be positive, got {b}")));
        }
        let p_min = (-b).exp();
        if p_min >= 0.5 {
            return Err(Error::Config(format!(
                "loss bound {b} gives p_min = {p_min:.4} >= 0.5; need B > ln 2"
            )));
        }
        Ok(LossBound { b, p_min })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// Shrinks a probability vector linearly toward the simplex interior:
    /// q_i = (1 - k*p_min)*p_i + p_min. Preserves the sum at 1 and keeps each
    /// entry in [p_min, 1 - (k-1)*p_min], so the NLL lands in
    /// [-log(1 - (k-1)*p_min), B].
    pub fn clamp_probabilities(&self, probs: &[f64]) -> Result<Vec<f64>> {
        let shrink = self.shrink_factor(probs.len())?;
        Ok(probs.iter().map(|&p| shrink * p + self.p_min).collect())
    }

    /// The factor (1 - k*p_min); errors when the class count is too large for
    /// this bound (k*p_min must stay below 1 for the clamp to be monotone).
    pub fn shrink_factor(&self, classes: usize) -> Result<f64> {
        let shrink = 1.0 - classes as f64 * self.p_min;
        if shrink <= 0.0 {
            return Err(Error::Config(format!(
                "loss bound {} is too tight for {classes} classes (k*e^-B >= 1)",
                self.b
            )));
        }
        Ok(shrink)
    }

    /// Clamps an arbitrary real-valued loss to [-B, B]. Used by models whose
    /// raw likelihood is unbounded (for example Gaussian observation models).
    pub fn clamp_value(&self, loss: f64) -> f64 {
        loss.clamp(-self.b, self.b)
    }
}

impl Default for LossBound {
    fn default() -> Self {
        LossBound::new(5.0).expect("5.0 > ln 2")
    }
}

/// Bounded negative log-likelihood: -log of the clamped probability of the
/// true class. Always within (0, B].
pub fn nll_loss(y_hat: &[f64], y: usize, bound: &LossBound) -> Result<f64> {
    if y >= y_hat.len() {
        return Err(Error::Index(format!(
            "class {y} out of range for {} classes",
            y_hat.len()
        )));
    }
    let sum: f64 = y_hat.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "probability vector sums to {sum}, expected 1"
        )));
    }
    let shrink = bound.shrink_factor(y_hat.len())?;
    let q = shrink * y_hat[y] + bound.p_min();
    Ok(-q.ln())
}

/// Numerically stable softmax (max-shifted).
fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("non-finite logits in softmax".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| e / total).collect())
}

/// Derives the per-sample mask seed for sample `idx` of a batch.
fn sample_mask_seed(batch_seed: u64, idx: usize) -> u64 {
    batch_seed.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Intermediate state of one forward pass, kept for backprop.
struct ForwardTrace {
    /// Pre-activations u_l per dense layer (last entry = logits).
    pre: Vec<Vec<f64>>,
    /// Post-activation, post-dropout outputs per hidden layer.
    hidden: Vec<Vec<f64>>,
    /// Dropout masks per hidden layer (empty in eval mode or rate 0).
    masks: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn forward_trace(
    params: &ModelParams,
    x: &[f64],
    mode: Mode,
    dropout_seed: Option<u64>,
) -> Result<ForwardTrace> {
    let arch = &params.arch;
    if x.len() != arch.input_size() {
        return Err(Error::Shape(format!(
            "input length {} does not match architecture input size {}",
            x.len(),
            arch.input_size()
        )));
    }
    let use_dropout = mode == Mode::Train && arch.dropout_rate() > 0.0;
    let mut mask_rng = if use_dropout {
        let seed = dropout_seed.ok_or_else(|| {
            Error::Config("train-mode forward with dropout requires a mask seed".into())
        })?;
        Some(ChaCha12Rng::seed_from_u64(seed))
    } else {
        None
    };

    let shapes = arch.layer_shapes();
    let n_layers = shapes.len();
    let keep = 1.0 - arch.dropout_rate();
    let mut pre = Vec::with_capacity(n_layers);
    let mut hidden = Vec::with_capacity(n_layers - 1);
    let mut masks = Vec::with_capacity(n_layers - 1);
    let mut input: Vec<f64> = x.to_vec();

    for (l, shape) in shapes.iter().enumerate() {
        let w = &params.theta[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out];
        let b = &params.theta[shape.b_offset..shape.b_offset + shape.fan_out];
        let mut u = vec![0.0; shape.fan_out];
        for (r, u_r) in u.iter_mut().enumerate() {
            let row = &w[r * shape.fan_in..(r + 1) * shape.fan_in];
            let mut acc = b[r];
            for (wv, xv) in row.iter().zip(&input) {
                acc += wv * xv;
            }
            *u_r = acc;
        }
        let is_output = l == n_layers - 1;
        if is_output {
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric("non-finite logits in forward pass".into()));
            }
            let probs = softmax(&u)?;
            pre.push(u);
            return Ok(ForwardTrace {
                pre,
                hidden,
                masks,
                probs,
            });
        }
        let mut a: Vec<f64> = u.iter().map(|&v| arch.activation().apply(v)).collect();
        let mask = if let Some(rng) = mask_rng.as_mut() {
            // Inverted dropout: surviving units are scaled by 1/keep at train
            // time so eval mode needs no rescaling.
            let mask: Vec<f64> = (0..a.len())
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            for (av, mv) in a.iter_mut().zip(&mask) {
                *av *= mv;
            }
            mask
        } else {
            Vec::new()
        };
        pre.push(u);
        masks.push(mask);
        hidden.push(a.clone());
        input = a;
    }
    unreachable!("loop returns at the output layer");
}

/// Class probability vector f(x, theta). Eval mode is deterministic; train
/// mode with dropout draws inverted-dropout masks from `dropout_seed`.
pub fn forward(
    params: &ModelParams,
    x: &[f64],
    mode: Mode,
    dropout_seed: Option<u64>,
) -> Result<Vec<f64>> {
    Ok(forward_trace(params, x, mode, dropout_seed)?.probs)
}

/// Pre-softmax logits; exposed for diagnostics and dropout-expectation tests.
pub fn forward_logits(
    params: &ModelParams,
    x: &[f64],
    mode: Mode,
    dropout_seed: Option<u64>,
) -> Result<Vec<f64>> {
    let trace = forward_trace(params, x, mode, dropout_seed)?;
    Ok(trace.pre.last().expect("at least one layer").clone())
}

/// Gradient of the summed bounded NLL over `batch` with respect to theta.
///
/// In train mode each sample's dropout masks are derived from `seed` and the
/// sample's position in the batch, so the gradient matches a forward pass
/// made with the same derivation.
pub fn backward(
    params: &ModelParams,
    batch: &[Sample],
    bound: &LossBound,
    mode: Mode,
    seed: Option<u64>,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("backward requires a nonempty batch".into()));
    }
    let arch = &params.arch;
    let shapes = arch.layer_shapes();
    let classes = arch.output_size();
    let shrink = bound.shrink_factor(classes)?;
    let mut grad = vec![0.0; params.theta.len()];

    for (idx, sample) in batch.iter().enumerate() {
        if sample.y >= classes {
            return Err(Error::Index(format!(
                "label {} out of range for {classes} classes",
                sample.y
            )));
        }
        let sample_seed = seed.map(|s| sample_mask_seed(s, idx));
        let trace = forward_trace(params, &sample.x, mode, sample_seed)?;

        // d l / d logits for l = -log(shrink*p_y + p_min):
        // -(shrink*p_y / q_y) * (delta_yj - p_j).
        let p = &trace.probs;
        let q_y = shrink * p[sample.y] + bound.p_min();
        let coeff = shrink * p[sample.y] / q_y;
        let mut delta: Vec<f64> = p.iter().map(|&p_j| coeff * p_j).collect();
        delta[sample.y] -= coeff;

        // Walk layers top-down; delta holds d l / d u_l.
        for (l, shape) in shapes.iter().enumerate().rev() {
            let layer_input: &[f64] = if l == 0 { &sample.x } else { &trace.hidden[l - 1] };
            let w_grad = &mut grad[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out];
            for (r, &d_r) in delta.iter().enumerate() {
                let row = &mut w_grad[r * shape.fan_in..(r + 1) * shape.fan_in];
                for (g, &inp) in row.iter_mut().zip(layer_input) {
                    *g += d_r * inp;
                }
            }
            let b_grad = &mut grad[shape.b_offset..shape.b_offset + shape.fan_out];
            for (g, &d_r) in b_grad.iter_mut().zip(&delta) {
                *g += d_r;
            }
            if l == 0 {
                break;
            }
            // Propagate to the previous hidden layer: through weights, then
            // the dropout mask, then the activation derivative.
            let w = &params.theta[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out];
            let mut prev = vec![0.0; shape.fan_in];
            for (r, &d_r) in delta.iter().enumerate() {
                let row = &w[r * shape.fan_in..(r + 1) * shape.fan_in];
                for (p_c, &wv) in prev.iter_mut().zip(row) {
                    *p_c += wv * d_r;
                }
            }
            let mask = &trace.masks[l - 1];
            if !mask.is_empty() {
                for (p_c, &m) in prev.iter_mut().zip(mask) {
                    *p_c *= m;
                }
            }
            for (p_c, &u) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                *p_c *= arch.activation().derivative(u);
            }
            delta = prev;
        }
    }
    Ok(grad)
}

/// Mean bounded NLL of a predictor's outputs over a sample set; convenience
/// used by training diagnostics.
pub fn mean_loss(params: &ModelParams, samples: &[Sample], bound: &LossBound) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("mean_loss requires at least one sample".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let probs = forward(params, &s.x, Mode::Eval, None)?;
        total += nll_loss(&probs, s.y, bound)?;
    }
    Ok(total / samples.len() as f64)
}
