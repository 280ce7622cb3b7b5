//! The deeply supervised Siamese embedding network.
//!
//! One tower (weights shared by both members of a pair):
//!
//! ```text
//! image ─ conv1 ─ pool ─ conv2 ─ pool ─┬─ global average ─────────── conv2 head
//!                                      └─ ip ─ relu ─┬─ affine ────── relu head
//!                                                    └─ affine ────── feat
//! ```
//!
//! Each of the three heads carries its own contrastive loss; the training
//! objective is their weighted sum. Companion losses backpropagate through
//! every layer below their head.

mod adadelta;
mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Canvas, ImageSample, PairExample, PairLabel, PairSampler};
use crate::error::{Error, Result};
use crate::tensor::{
    affine, affine_backward_acc, conv2d, conv2d_backward_acc, maxpool2, maxpool2_backward, relu_backward_slice,
    relu_slice, Pooled, Tensor,
};

pub use adadelta::{adadelta_delta, Adadelta};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub conv2: f64,
    pub relu: f64,
    pub feat: f64,
}

impl Default for HeadWeights {
    fn default() -> Self {
        Self {
            conv2: 1.0,
            relu: 1.0,
            feat: 1.0,
        }
    }
}

impl HeadWeights {
    pub fn get(&self, head: Head) -> f64 {
        match head {
            Head::Conv2 => self.conv2,
            Head::Relu => self.relu,
            Head::Feat => self.feat,
            Head::Ip => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_height: usize,
    pub input_width: usize,
    /// Square kernel extent shared by both convolutions.
    pub kernel_size: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub ip_width: usize,
    pub relu_head_dim: usize,
    pub feat_dim: usize,
    pub margin: f64,
    pub head_weights: HeadWeights,
}

impl NetworkSpec {
    pub fn for_canvas(canvas: Canvas) -> Self {
        Self {
            input_height: canvas.height,
            input_width: canvas.width,
            kernel_size: 5,
            conv1_channels: 20,
            conv2_channels: 50,
            ip_width: 500,
            relu_head_dim: 20,
            feat_dim: 10,
            margin: 1.0,
            head_weights: HeadWeights::default(),
        }
    }

    pub fn canvas(&self) -> Canvas {
        Canvas {
            height: self.input_height,
            width: self.input_width,
        }
    }

    fn stage(&self, extent: usize) -> Option<usize> {
        let conv = extent.checked_sub(self.kernel_size)? + 1;
        (conv % 2 == 0).then_some(conv / 2)
    }

    /// Extents after conv1 and after pool1/conv2/pool2, or `None` when a
    /// pooling stage would see an odd extent.
    fn geometry(&self) -> Option<[(usize, usize); 4]> {
        let h1 = self.stage(self.input_height)?;
        let w1 = self.stage(self.input_width)?;
        let h2 = self.stage(h1)?;
        let w2 = self.stage(w1)?;
        Some([(h1 * 2, w1 * 2), (h1, w1), (h2 * 2, w2 * 2), (h2, w2)])
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            self.input_height,
            self.input_width,
            self.kernel_size,
            self.conv1_channels,
            self.conv2_channels,
            self.ip_width,
            self.relu_head_dim,
            self.feat_dim,
        ];
        if extents.contains(&0) {
            return Err(Error::InvalidArgument(format!("network extents must be positive: {self:?}")));
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::InvalidArgument(format!("margin must be positive, got {}", self.margin)));
        }
        let w = self.head_weights;
        if [w.conv2, w.relu, w.feat].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("head weights must be finite and ≥ 0: {w:?}")));
        }
        match self.geometry() {
            Some(g) if g[3].0 > 0 && g[3].1 > 0 => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "input {}×{} with kernel {} does not reduce to a positive even-pooled extent",
                self.input_height, self.input_width, self.kernel_size
            ))),
        }
    }

    /// Length of the flattened second pooling output fed to `ip`.
    pub fn flat_len(&self) -> usize {
        let (h, w) = self.geometry().expect("validated spec")[3];
        self.conv2_channels * h * w
    }

    pub fn head_dim(&self, head: Head) -> usize {
        match head {
            Head::Conv2 => self.conv2_channels,
            Head::Relu => self.relu_head_dim,
            Head::Feat => self.feat_dim,
            Head::Ip => self.ip_width,
        }
    }

    /// Parameter tensor names and shapes, in checkpoint order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let k = self.kernel_size;
        vec![
            ("conv1.weight", vec![self.conv1_channels, 1, k, k]),
            ("conv1.bias", vec![self.conv1_channels]),
            ("conv2.weight", vec![self.conv2_channels, self.conv1_channels, k, k]),
            ("conv2.bias", vec![self.conv2_channels]),
            ("ip.weight", vec![self.ip_width, self.flat_len()]),
            ("ip.bias", vec![self.ip_width]),
            ("relu_head.weight", vec![self.relu_head_dim, self.ip_width]),
            ("relu_head.bias", vec![self.relu_head_dim]),
            ("feat.weight", vec![self.feat_dim, self.ip_width]),
            ("feat.bias", vec![self.feat_dim]),
        ]
    }
}

/// Embedding layers exposed for similarity, KNN and clustering. The first
/// three are supervised; `Ip` is the pre-rectifier `ip` activation, exported
/// for analysis only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Conv2,
    Relu,
    Feat,
    Ip,
}

impl Head {
    pub const SUPERVISED: [Head; 3] = [Head::Conv2, Head::Relu, Head::Feat];
    pub const ALL: [Head; 4] = [Head::Conv2, Head::Relu, Head::Feat, Head::Ip];

    pub fn name(self) -> &'static str {
        match self {
            Head::Conv2 => "conv2",
            Head::Relu => "relu",
            Head::Feat => "feat",
            Head::Ip => "ip",
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Head::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown head `{s}` (expected conv2, relu, feat or ip)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLevelEmbedding {
    pub conv2_head: Vec<f64>,
    pub relu_head: Vec<f64>,
    pub feat: Vec<f64>,
    pub ip: Vec<f64>,
}

impl MultiLevelEmbedding {
    pub fn head(&self, head: Head) -> &[f64] {
        match head {
            Head::Conv2 => &self.conv2_head,
            Head::Relu => &self.relu_head,
            Head::Feat => &self.feat,
            Head::Ip => &self.ip,
        }
    }

    pub fn is_finite(&self) -> bool {
        Head::ALL.iter().all(|&h| self.head(h).iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub ip_w: Tensor,
    pub ip_b: Tensor,
    pub relu_head_w: Tensor,
    pub relu_head_b: Tensor,
    pub feat_w: Tensor,
    pub feat_b: Tensor,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut t = spec.param_shapes().into_iter().map(|(_, s)| Tensor::zeros(&s));
        let mut next = || t.next().expect("ten parameter tensors");
        Self {
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            ip_w: next(),
            ip_b: next(),
            relu_head_w: next(),
            relu_head_b: next(),
            feat_w: next(),
            feat_b: next(),
        }
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut params = Self::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = spec.kernel_size * spec.kernel_size;
        let fans = [
            (k2, spec.conv1_channels * k2),
            (spec.conv1_channels * k2, spec.conv2_channels * k2),
            (spec.flat_len(), spec.ip_width),
            (spec.ip_width, spec.relu_head_dim),
            (spec.ip_width, spec.feat_dim),
        ];
        let weights = [
            &mut params.conv1_w,
            &mut params.conv2_w,
            &mut params.ip_w,
            &mut params.relu_head_w,
            &mut params.feat_w,
        ];
        for (w, (fan_in, fan_out)) in weights.into_iter().zip(fans) {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for v in w.data_mut() {
                *v = dist.sample(&mut rng);
            }
        }
        params
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.ip_w,
            &self.ip_b,
            &self.relu_head_w,
            &self.relu_head_b,
            &self.feat_w,
            &self.feat_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.ip_w,
            &mut self.ip_b,
            &mut self.relu_head_w,
            &mut self.relu_head_b,
            &mut self.feat_w,
            &mut self.feat_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        for ((name, shape), t) in spec.param_shapes().into_iter().zip(self.tensors()) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter {name} has shape {:?}, spec requires {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Contrastive loss of one pair at embedding distance `d` and its derivative
/// w.r.t. `d`: `(1−Y)·½d² + Y·½·max(0, m−d)²`.
pub fn contrastive_loss(d: f64, y: PairLabel, margin: f64) -> (f64, f64) {
    let y = y.y();
    let hinge = (margin - d).max(0.0);
    let loss = (1.0 - y) * 0.5 * d * d + 0.5 * y * hinge * hinge;
    let grad = (1.0 - y) * d - y * hinge;
    (loss, grad)
}

/// Weighted per-head contrastive losses of one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLoss {
    pub total: f64,
    /// Unweighted losses in the order conv2 head, relu head, feat.
    pub per_head: [f64; 3],
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Combined deeply supervised loss: `Σ_h weight_h · contrastive(‖a_h − b_h‖)`.
pub fn combined_loss(a: &MultiLevelEmbedding, b: &MultiLevelEmbedding, y: PairLabel, spec: &NetworkSpec) -> PairLoss {
    combined_loss_with_grad(a, b, y, spec).0
}

/// [`combined_loss`] plus its gradient w.r.t. each supervised head of `a`
/// (the gradient w.r.t. `b` is the negation).
fn combined_loss_with_grad(
    a: &MultiLevelEmbedding,
    b: &MultiLevelEmbedding,
    y: PairLabel,
    spec: &NetworkSpec,
) -> (PairLoss, [Vec<f64>; 3]) {
    let mut per_head = [0.0; 3];
    let mut total = 0.0;
    let grads = Head::SUPERVISED.map(|head| {
        let (ea, eb) = (a.head(head), b.head(head));
        let d = euclidean(ea, eb);
        let (loss, dl_dd) = contrastive_loss(d, y, spec.margin);
        let w = spec.head_weights.get(head);
        per_head[head as usize] = loss;
        total += w * loss;
        // ∂d/∂a = (a − b)/d; zero at d = 0 where the distance is not differentiable
        let coef = if d > 0.0 { w * dl_dd / d } else { 0.0 };
        ea.iter().zip(eb).map(|(x, z)| coef * (x - z)).collect()
    });
    (PairLoss { total, per_head }, grads)
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    input: Tensor,
    c1: Tensor,
    p1: Pooled,
    c2: Tensor,
    p2: Pooled,
    relu: Vec<f64>,
    embedding: MultiLevelEmbedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = NetworkParams::init(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        Ok(Self { spec, params })
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let want = [1, self.spec.input_height, self.spec.input_width];
        if image.shape() != want {
            return Err(Error::Shape(format!(
                "image has shape {:?}, network expects {want:?}",
                image.shape()
            )));
        }
        Ok(())
    }

    fn trace(&self, image: &Tensor) -> Result<Trace> {
        self.check_input(image)?;
        let p = &self.params;
        let c1 = conv2d(image, &p.conv1_w, p.conv1_b.data())?;
        let p1 = maxpool2(&c1)?;
        let c2 = conv2d(&p1.output, &p.conv2_w, p.conv2_b.data())?;
        let p2 = maxpool2(&c2)?;

        let area = p2.output.shape()[1] * p2.output.shape()[2];
        let conv2_head = p2
            .output
            .data()
            .chunks_exact(area)
            .map(|ch| ch.iter().sum::<f64>() / area as f64)
            .collect();
        let ip = affine(p2.output.data(), &p.ip_w, p.ip_b.data())?;
        let relu = relu_slice(&ip);
        let relu_head = affine(&relu, &p.relu_head_w, p.relu_head_b.data())?;
        let feat = affine(&relu, &p.feat_w, p.feat_b.data())?;
        Ok(Trace {
            input: image.clone(),
            c1,
            p1,
            c2,
            p2,
            relu,
            embedding: MultiLevelEmbedding {
                conv2_head,
                relu_head,
                feat,
                ip,
            },
        })
    }

    /// Embeddings of one `[1, H, W]` image at every head.
    pub fn embed(&self, image: &Tensor) -> Result<MultiLevelEmbedding> {
        Ok(self.trace(image)?.embedding)
    }

    /// Accumulates into `grads` the parameter gradients of one tower given
    /// upstream gradients at the three supervised heads.
    fn backward(&self, t: &Trace, head_grads: &[Vec<f64>; 3], grads: &mut NetworkParams) -> Result<()> {
        if head_grads.iter().all(|g| g.iter().all(|&v| v == 0.0)) {
            return Ok(());
        }
        let p = &self.params;
        let [d_conv2, d_relu_head, d_feat] = head_grads;

        let mut d_relu = vec![0.0; self.spec.ip_width];
        affine_backward_acc(
            &t.relu,
            &p.relu_head_w,
            d_relu_head,
            grads.relu_head_w.data_mut(),
            grads.relu_head_b.data_mut(),
            Some(&mut d_relu),
        )?;
        affine_backward_acc(
            &t.relu,
            &p.feat_w,
            d_feat,
            grads.feat_w.data_mut(),
            grads.feat_b.data_mut(),
            Some(&mut d_relu),
        )?;
        let d_ip = relu_backward_slice(&t.embedding.ip, &d_relu);

        let mut d_p2 = vec![0.0; t.p2.output.len()];
        affine_backward_acc(
            t.p2.output.data(),
            &p.ip_w,
            &d_ip,
            grads.ip_w.data_mut(),
            grads.ip_b.data_mut(),
            Some(&mut d_p2),
        )?;
        let area = t.p2.output.shape()[1] * t.p2.output.shape()[2];
        for (ch, g) in d_p2.chunks_exact_mut(area).zip(d_conv2) {
            let share = g / area as f64;
            for v in ch {
                *v += share;
            }
        }
        let d_p2 = Tensor::new(t.p2.output.shape().to_vec(), d_p2)?;
        let d_c2 = maxpool2_backward(t.c2.shape(), &t.p2.argmax, &d_p2)?;

        let mut d_p1 = Tensor::zeros(t.p1.output.shape());
        conv2d_backward_acc(
            &t.p1.output,
            &p.conv2_w,
            &d_c2,
            grads.conv2_w.data_mut(),
            grads.conv2_b.data_mut(),
            Some(d_p1.data_mut()),
        )?;
        let d_c1 = maxpool2_backward(t.c1.shape(), &t.p1.argmax, &d_p1)?;
        conv2d_backward_acc(
            &t.input,
            &p.conv1_w,
            &d_c1,
            grads.conv1_w.data_mut(),
            grads.conv1_b.data_mut(),
            None,
        )?;
        Ok(())
    }

    /// Combined loss of one pair; gradients of both towers are added into
    /// `grads`.
    pub fn pair_gradients(&self, a: &Tensor, b: &Tensor, y: PairLabel, grads: &mut NetworkParams) -> Result<PairLoss> {
        let ta = self.trace(a)?;
        let tb = self.trace(b)?;
        let (loss, ga) = combined_loss_with_grad(&ta.embedding, &tb.embedding, y, &self.spec);
        if !loss.total.is_finite() {
            return Err(Error::NonFinite(format!("pair loss {}", loss.total)));
        }
        let gb = ga.clone().map(|g| g.into_iter().map(|v| -v).collect());
        self.backward(&ta, &ga, grads)?;
        self.backward(&tb, &gb, grads)?;
        Ok(loss)
    }

    /// Combined loss of one pair without gradients.
    pub fn pair_loss(&self, a: &Tensor, b: &Tensor, y: PairLabel) -> Result<PairLoss> {
        let ea = self.embed(a)?;
        let eb = self.embed(b)?;
        Ok(combined_loss(&ea, &eb, y, &self.spec))
    }

    /// Mean combined loss of the minibatch and its gradient w.r.t. every
    /// parameter. Pairs are accumulated in index order.
    pub fn batch_gradients(&self, batch: &[PairExample<'_>], grads: &mut NetworkParams) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("minibatch is empty".into()));
        }
        grads.fill_zero();
        let mut total = 0.0;
        for (i, pair) in batch.iter().enumerate() {
            let loss = self
                .pair_gradients(&pair.a.pixels, &pair.b.pixels, pair.y, grads)
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::NonFiniteLoss { pair: i },
                    e => e,
                })?;
            total += loss.total;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(total / n)
    }

    /// One optimization step on a minibatch; returns the mean loss before the
    /// update. Parameters are left untouched when the step fails.
    pub fn train_step(&mut self, opt: &mut Adadelta, batch: &[PairExample<'_>]) -> Result<f64> {
        let mut grads = NetworkParams::zeros(&self.spec);
        let loss = self.batch_gradients(batch, &mut grads)?;
        opt.apply(&mut self.params, &grads)?;
        Ok(loss)
    }
}

/// Epoch-based training loop over balanced pair minibatches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub pairs_per_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Trains `net` for `config.epochs` epochs of `pairs_per_epoch / 10`
/// minibatches each, calling `on_epoch` after every epoch.
pub fn train<R, F>(
    net: &mut Network,
    opt: &mut Adadelta,
    samples: &[ImageSample],
    config: TrainConfig,
    rng: &mut R,
    mut on_epoch: F,
) -> Result<Vec<EpochReport>>
where
    R: Rng + ?Sized,
    F: FnMut(&EpochReport),
{
    let sampler = PairSampler::new(samples)?;
    let steps = (config.pairs_per_epoch / (2 * crate::data::PAIRS_PER_KIND)).max(1);
    let mut grads = NetworkParams::zeros(&net.spec);
    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..steps {
            let batch = sampler.minibatch(rng);
            sum += net.batch_gradients(&batch, &mut grads)?;
            opt.apply(&mut net.params, &grads)?;
        }
        let report = EpochReport {
            epoch: epoch + 1,
            steps,
            mean_loss: sum / steps as f64,
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
