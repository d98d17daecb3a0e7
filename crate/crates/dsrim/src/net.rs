//! The siamese ranker: a shared feed-forward ReLU network projecting input
//! vectors to a 32-dimensional latent space, cosine scoring, the pairwise
//! hinge objective over Δ = sim(Q,D+) − Σ sim(Q,D−), manual backpropagation
//! and mini-batch SGD.

use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::embeddings::write_floats;
use crate::error::{Error, Result};
use crate::vecmath::{cosine, dot, norm};

/// Hidden and output widths of the ranker: two hidden layers of 64 units
/// and a 32-unit latent output.
pub const LAYER_SIZES: [usize; 3] = [64, 64, 32];

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// W·x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(&self.data[r * self.cols..(r + 1) * self.cols], x))
            .collect()
    }

    /// Wᵀ·y
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Parameters of the shared branch network.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseParams {
    layers: Vec<Layer>,
}

impl SiameseParams {
    /// Fresh parameters for input → 64 → 64 → 32, ReLU everywhere.
    /// Weights are Glorot-uniform (half-width √(6/(fan_in+fan_out))), biases
    /// zero. Deterministic per seed.
    pub fn init_params(input_dim: usize, seed: u64) -> Result<SiameseParams> {
        Self::with_layer_sizes(input_dim, &LAYER_SIZES, seed)
    }

    /// Same initialization with arbitrary layer widths (used by tests and
    /// gradient checks; the experiment pipeline always uses [`LAYER_SIZES`]).
    pub fn with_layer_sizes(input_dim: usize, sizes: &[usize], seed: u64) -> Result<SiameseParams> {
        if input_dim == 0 {
            return Err(Error::Config("network input_dim must be positive".into()));
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input_dim;
        for &fan_out in sizes {
            let half = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for slot in &mut w.data {
                *slot = rng.random_range(-half..half);
            }
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
            });
            fan_in = fan_out;
        }
        Ok(SiameseParams { layers })
    }

    /// Assemble from explicit layers, validating the dimension chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<SiameseParams> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.w.data.len() != layer.w.rows * layer.w.cols || layer.b.len() != layer.w.rows {
                return Err(Error::Dimension(format!(
                    "layer {i}: inconsistent matrix/bias shapes"
                )));
            }
            if i > 0 && layers[i - 1].w.rows != layer.w.cols {
                return Err(Error::Dimension(format!(
                    "layer {i} expects input {} but layer {} outputs {}",
                    layer.w.cols,
                    i - 1,
                    layers[i - 1].w.rows
                )));
            }
            if layer.w.data.iter().chain(&layer.b).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "layer {i} contains non-finite entries"
                )));
            }
        }
        Ok(SiameseParams { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Deterministic evaluation-mode forward pass: l_i = ReLU(W l + b) on
    /// every layer including the output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.w.matvec(&a);
            for (slot, b) in a.iter_mut().zip(&layer.b) {
                *slot = (*slot + b).max(0.0);
            }
        }
        Ok(a)
    }

    /// Training-mode forward pass with inverted dropout on the hidden
    /// activations only. The returned trace carries everything backprop
    /// needs, including the masks, so forward and backward share them.
    fn forward_train(
        &self,
        x: &[f64],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut zs = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers.saturating_sub(1));
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.matvec(activations.last().unwrap());
            for (slot, b) in z.iter_mut().zip(&layer.b) {
                *slot += b;
            }
            let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let hidden = i + 1 < n_layers;
            if hidden {
                let mask: Vec<f64> = if dropout > 0.0 {
                    let scale = 1.0 / (1.0 - dropout);
                    a.iter()
                        .map(|_| {
                            if rng.random::<f64>() >= dropout {
                                scale
                            } else {
                                0.0
                            }
                        })
                        .collect()
                } else {
                    vec![1.0; a.len()]
                };
                for (slot, m) in a.iter_mut().zip(&mask) {
                    *slot *= m;
                }
                masks.push(mask);
            }
            zs.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            activations,
            zs,
            masks,
        })
    }

    /// Relevance score R(D|Q): cosine of the two latent vectors; 0 when
    /// either latent vector is all-zero.
    pub fn score(&self, q: &[f64], d: &[f64]) -> Result<f64> {
        cosine(&self.forward(q)?, &self.forward(d)?)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.data.len() + l.b.len()).sum()
    }

    /// Flat parameter view (per layer: row-major weights, then biases); used
    /// by the finite-difference checks.
    pub fn get_param(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            if i < layer.w.data.len() {
                return layer.w.data[i];
            }
            i -= layer.w.data.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, v: f64) {
        for layer in &mut self.layers {
            if i < layer.w.data.len() {
                layer.w.data[i] = v;
                return;
            }
            i -= layer.w.data.len();
            if i < layer.b.len() {
                layer.b[i] = v;
                return;
            }
            i -= layer.b.len();
        }
        panic!("parameter index out of range");
    }
}

struct ForwardTrace {
    /// a_0 = x, then post-ReLU (and post-dropout for hidden) activations.
    activations: Vec<Vec<f64>>,
    /// Pre-activations z_i, one per layer.
    zs: Vec<Vec<f64>>,
    /// Dropout scale factors (0 or 1/(1−p)) for hidden layers only.
    masks: Vec<Vec<f64>>,
}

/// Per-parameter gradients, shaped exactly like [`SiameseParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &SiameseParams) -> Gradients {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    w: Mat::zeros(l.w.rows, l.w.cols),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.data.iter_mut().zip(&b.w.data) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for x in &mut layer.w.data {
                *x *= factor;
            }
            for x in &mut layer.b {
                *x *= factor;
            }
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.data.iter().chain(&l.b).all(|&x| x == 0.0))
    }

    /// Flat view matching [`SiameseParams::get_param`].
    pub fn get_param(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            if i < layer.w.data.len() {
                return layer.w.data[i];
            }
            i -= layer.w.data.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index out of range");
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hinge margin α.
    pub alpha: f64,
    /// Negatives per instance (n).
    pub n_negatives: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// When set, Δ averages the negative similarities instead of summing
    /// them. Off by default: Eq. 5 as printed sums.
    pub average_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            n_negatives: 4,
            batch_size: 5,
            dropout: 0.3,
            epochs: 50,
            learning_rate: 0.01,
            seed: 42,
            average_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.n_negatives == 0 {
            return Err(Error::Config("n_negatives must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0,1), got {}",
                self.dropout
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A training instance with its vectors resolved: one query, one relevant
/// document, n irrelevant documents.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceVectors {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Δ of Eq. 5: sim(Q,D+) − Σ_p sim(Q,D_p^−), evaluated in eval mode (no
/// dropout). With `average_negatives` the sum becomes a mean.
pub fn delta(
    params: &SiameseParams,
    inst: &InstanceVectors,
    average_negatives: bool,
) -> Result<f64> {
    let pos = params.score(&inst.query, &inst.positive)?;
    let mut neg_sum = 0.0;
    for negative in &inst.negatives {
        neg_sum += params.score(&inst.query, negative)?;
    }
    if average_negatives && !inst.negatives.is_empty() {
        neg_sum /= inst.negatives.len() as f64;
    }
    Ok(pos - neg_sum)
}

/// L = max(0, α − Δ).
pub fn hinge_loss(delta_value: f64, alpha: f64) -> f64 {
    (alpha - delta_value).max(0.0)
}

/// ∂cosine(u,v)/∂u = (v/|v| − cos·u/|u|)/|u|; zero when either norm is zero
/// (cosine is the 0 constant there by convention).
fn cosine_grad_u(u: &[f64], v: &[f64], cos: f64) -> Vec<f64> {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return vec![0.0; u.len()];
    }
    u.iter()
        .zip(v)
        .map(|(ui, vi)| (vi / nv - cos * ui / nu) / nu)
        .collect()
}

/// Exact subgradient of one instance's hinge loss with respect to every
/// parameter. Dropout masks are drawn from `rng` and shared between the
/// forward and backward passes; in the hinge's flat region (Δ ≥ α) every
/// gradient is exactly zero. Also returns (loss, Δ). Note Δ here is computed
/// under the training-mode (dropped-out) forward passes.
pub fn instance_gradients(
    params: &SiameseParams,
    inst: &InstanceVectors,
    cfg: &TrainConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(Gradients, f64, f64)> {
    if inst.negatives.len() != cfg.n_negatives {
        return Err(Error::Config(format!(
            "instance has {} negatives, config expects {}",
            inst.negatives.len(),
            cfg.n_negatives
        )));
    }
    let q_trace = params.forward_train(&inst.query, cfg.dropout, rng)?;
    let pos_trace = params.forward_train(&inst.positive, cfg.dropout, rng)?;
    let neg_traces: Vec<ForwardTrace> = inst
        .negatives
        .iter()
        .map(|n| params.forward_train(n, cfg.dropout, rng))
        .collect::<Result<_>>()?;

    let y_q = q_trace.activations.last().unwrap();
    let y_pos = pos_trace.activations.last().unwrap();
    let pos_sim = cosine(y_q, y_pos)?;
    let neg_sims: Vec<f64> = neg_traces
        .iter()
        .map(|t| cosine(y_q, t.activations.last().unwrap()))
        .collect::<Result<_>>()?;
    let neg_weight = if cfg.average_negatives {
        1.0 / inst.negatives.len() as f64
    } else {
        1.0
    };
    let delta_value = pos_sim - neg_weight * neg_sims.iter().sum::<f64>();
    let loss = hinge_loss(delta_value, cfg.alpha);

    let mut grads = Gradients::zeros_like(params);
    if delta_value >= cfg.alpha {
        return Ok((grads, loss, delta_value));
    }

    // L = α − Δ in the active region: ∂L/∂sim(Q,D+) = −1,
    // ∂L/∂sim(Q,D_p^−) = +neg_weight.
    let mut grad_yq = vec![0.0; y_q.len()];
    let g_pos = cosine_grad_u(y_q, y_pos, pos_sim);
    for (acc, g) in grad_yq.iter_mut().zip(&g_pos) {
        *acc -= g;
    }
    let grad_ypos: Vec<f64> = cosine_grad_u(y_pos, y_q, pos_sim)
        .into_iter()
        .map(|g| -g)
        .collect();
    backprop_branch(params, &pos_trace, grad_ypos, &mut grads);
    for (trace, &sim) in neg_traces.iter().zip(&neg_sims) {
        let y_neg = trace.activations.last().unwrap();
        let g_q = cosine_grad_u(y_q, y_neg, sim);
        for (acc, g) in grad_yq.iter_mut().zip(&g_q) {
            *acc += neg_weight * g;
        }
        let grad_yneg: Vec<f64> = cosine_grad_u(y_neg, y_q, sim)
            .into_iter()
            .map(|g| neg_weight * g)
            .collect();
        backprop_branch(params, trace, grad_yneg, &mut grads);
    }
    backprop_branch(params, &q_trace, grad_yq, &mut grads);

    Ok((grads, loss, delta_value))
}

/// Push a latent-vector gradient down one branch, accumulating into `grads`.
/// The branches share weights, so contributions simply add.
fn backprop_branch(
    params: &SiameseParams,
    trace: &ForwardTrace,
    grad_output: Vec<f64>,
    grads: &mut Gradients,
) {
    let n_layers = params.layers.len();
    let mut grad_a = grad_output;
    for i in (0..n_layers).rev() {
        // Through dropout (hidden layers only), then ReLU.
        if i + 1 < n_layers {
            for (g, m) in grad_a.iter_mut().zip(&trace.masks[i]) {
                *g *= m;
            }
        }
        let delta_z: Vec<f64> = grad_a
            .iter()
            .zip(&trace.zs[i])
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let input = &trace.activations[i];
        let gl = &mut grads.layers[i];
        for (r, &dz) in delta_z.iter().enumerate() {
            if dz != 0.0 {
                let row = &mut gl.w.data[r * gl.w.cols..(r + 1) * gl.w.cols];
                for (slot, &a) in row.iter_mut().zip(input) {
                    *slot += dz * a;
                }
            }
            gl.b[r] += dz;
        }
        if i > 0 {
            grad_a = params.layers[i].w.t_matvec(&delta_z);
        }
    }
}

/// Result of [`train`]: updated parameters and the mean instance loss of
/// each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SiameseParams,
    pub loss_history: Vec<f64>,
}

const DROPOUT_SEED_OFFSET: u64 = 0x64_72_6f_70_6f_75_74; // "dropout"

/// Per-(epoch, instance) dropout rng, independent of batch order, so a
/// single instance's gradient is a pure function of the parameters.
fn instance_rng(cfg: &TrainConfig, epoch: usize, instance_index: usize) -> ChaCha20Rng {
    let seed = cfg
        .seed
        .wrapping_add(DROPOUT_SEED_OFFSET)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(instance_index as u64);
    ChaCha20Rng::seed_from_u64(seed)
}

/// Mini-batch SGD over shuffled instances: per epoch, instances are
/// reshuffled, gradients averaged within each batch (the final batch may be
/// smaller), and parameters updated by mean gradient × learning rate.
/// Deterministic per seed.
pub fn train(
    params: SiameseParams,
    instances: &[InstanceVectors],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::Config("training needs at least one instance".into()));
    }
    for (i, inst) in instances.iter().enumerate() {
        if inst.negatives.len() != cfg.n_negatives {
            return Err(Error::Config(format!(
                "instance {i} has {} negatives, config expects {}",
                inst.negatives.len(),
                cfg.n_negatives
            )));
        }
    }
    let mut params = params;
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..instances.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut shuffle_rng);
        // Accumulated by instance index so the per-epoch mean is independent
        // of the shuffle's summation order.
        let mut losses = vec![0.0; instances.len()];
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = Gradients::zeros_like(&params);
            for &idx in batch {
                let mut rng = instance_rng(cfg, epoch, idx);
                let (g, loss, _) = instance_gradients(&params, &instances[idx], cfg, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss diverged at epoch {epoch}, batch {batch_no}"
                    )));
                }
                acc.add_assign(&g);
                losses[idx] = loss;
            }
            acc.scale(cfg.learning_rate / batch.len() as f64);
            for (layer, g) in params.layers.iter_mut().zip(&acc.layers) {
                for (w, gw) in layer.w.data.iter_mut().zip(&g.w.data) {
                    *w -= gw;
                }
                for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                    *b -= gb;
                }
            }
        }
        history.push(losses.iter().sum::<f64>() / instances.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// Persist parameters plus the training config; round-trips bit-exactly.
pub fn write_checkpoint(
    params: &SiameseParams,
    cfg: &TrainConfig,
    mut w: impl Write,
) -> Result<()> {
    writeln!(w, "DSRIM-CHECKPOINT v1")?;
    writeln!(w, "alpha\t{}", cfg.alpha)?;
    writeln!(w, "n_negatives\t{}", cfg.n_negatives)?;
    writeln!(w, "batch_size\t{}", cfg.batch_size)?;
    writeln!(w, "dropout\t{}", cfg.dropout)?;
    writeln!(w, "epochs\t{}", cfg.epochs)?;
    writeln!(w, "learning_rate\t{}", cfg.learning_rate)?;
    writeln!(w, "seed\t{}", cfg.seed)?;
    writeln!(w, "average_negatives\t{}", cfg.average_negatives)?;
    for (i, layer) in params.layers.iter().enumerate() {
        writeln!(w, "layer\t{i}\t{}\t{}", layer.w.rows, layer.w.cols)?;
        for r in 0..layer.w.rows {
            write!(w, "w\t{i}\t{r}\t")?;
            write_floats(
                &mut w,
                &layer.w.data[r * layer.w.cols..(r + 1) * layer.w.cols],
            )?;
            writeln!(w)?;
        }
        write!(w, "b\t{i}\t")?;
        write_floats(&mut w, &layer.b)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_checkpoint(
    src: impl BufRead,
    source_name: &str,
) -> Result<(SiameseParams, TrainConfig)> {
    let mut lines = src.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(source_name, 1, "empty checkpoint"))?
        .1?;
    if header != "DSRIM-CHECKPOINT v1" {
        return Err(Error::parse(
            source_name,
            1,
            "expected `DSRIM-CHECKPOINT v1` header",
        ));
    }
    let mut cfg = TrainConfig::default();
    let mut layers: Vec<Layer> = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::parse(source_name, lineno, msg.to_string());
        match fields[0] {
            "alpha" if fields.len() == 2 => {
                cfg.alpha = fields[1].parse().map_err(|_| bad("bad alpha"))?;
            }
            "n_negatives" if fields.len() == 2 => {
                cfg.n_negatives = fields[1].parse().map_err(|_| bad("bad n_negatives"))?;
            }
            "batch_size" if fields.len() == 2 => {
                cfg.batch_size = fields[1].parse().map_err(|_| bad("bad batch_size"))?;
            }
            "dropout" if fields.len() == 2 => {
                cfg.dropout = fields[1].parse().map_err(|_| bad("bad dropout"))?;
            }
            "epochs" if fields.len() == 2 => {
                cfg.epochs = fields[1].parse().map_err(|_| bad("bad epochs"))?;
            }
            "learning_rate" if fields.len() == 2 => {
                cfg.learning_rate = fields[1].parse().map_err(|_| bad("bad learning_rate"))?;
            }
            "seed" if fields.len() == 2 => {
                cfg.seed = fields[1].parse().map_err(|_| bad("bad seed"))?;
            }
            "average_negatives" if fields.len() == 2 => {
                cfg.average_negatives = fields[1]
                    .parse()
                    .map_err(|_| bad("bad average_negatives"))?;
            }
            "layer" if fields.len() == 4 => {
                let rows: usize = fields[2].parse().map_err(|_| bad("bad rows"))?;
                let cols: usize = fields[3].parse().map_err(|_| bad("bad cols"))?;
                layers.push(Layer {
                    w: Mat::zeros(rows, cols),
                    b: vec![0.0; rows],
                });
            }
            "w" if fields.len() == 4 => {
                let i: usize = fields[1].parse().map_err(|_| bad("bad layer index"))?;
                let r: usize = fields[2].parse().map_err(|_| bad("bad row index"))?;
                let layer = layers
                    .get_mut(i)
                    .ok_or_else(|| bad("weight row before layer"))?;
                let row: Vec<f64> = fields[3]
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad float")))
                    .collect::<Result<_>>()?;
                if r >= layer.w.rows || row.len() != layer.w.cols {
                    return Err(bad("weight row shape mismatch"));
                }
                layer.w.data[r * layer.w.cols..(r + 1) * layer.w.cols].copy_from_slice(&row);
            }
            "b" if fields.len() == 3 => {
                let i: usize = fields[1].parse().map_err(|_| bad("bad layer index"))?;
                let layer = layers
                    .get_mut(i)
                    .ok_or_else(|| bad("bias row before layer"))?;
                let b: Vec<f64> = fields[2]
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad float")))
                    .collect::<Result<_>>()?;
                if b.len() != layer.b.len() {
                    return Err(bad("bias length mismatch"));
                }
                layer.b = b;
            }
            _ => return Err(bad("unrecognized checkpoint row")),
        }
    }
    Ok((SiameseParams::from_layers(layers)?, cfg))
}
