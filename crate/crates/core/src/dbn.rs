//! Deep belief network detector: RBMs pre-trained greedily layer by layer,
//! then unrolled into a sigmoid feed-forward net with a two-way softmax head
//! and fine-tuned end to end by backpropagation on categorical cross-entropy.
//!
//! Class 1 is malicious and class 0 benign. An exact probability tie predicts
//! class 0.

use serde::{Deserialize, Serialize};

use crate::curve::{ErrorCurve, LossCurve};
use crate::error::{Error, Result};
use crate::features::EncodedDataset;
use crate::rbm::{CdConfig, Rbm, INIT_STD};
use crate::tensor::{log_sum_exp, mix_seed, sigmoid, softmax, Matrix, SeededRng};

pub const CLASSES: usize = 2;

/// Stream tag used to derive the softmax head's init seed.
const HEAD_STREAM: u64 = 0x4845_4144;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `outputs × inputs`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut pre = input.matmul_nt(&self.w)?;
        pre.add_row_vector(&self.b)?;
        Ok(sigmoid(&pre))
    }
}

impl From<Rbm> for Layer {
    fn from(rbm: Rbm) -> Self {
        let (w, _, hbias) = rbm.into_parts();
        Layer { w, b: hbias }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DbnFile", into = "DbnFile")]
pub struct Dbn {
    layers: Vec<Layer>,
    /// `CLASSES × last hidden`.
    head_w: Matrix,
    head_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    inputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DbnFile {
    layers: Vec<LayerFile>,
    head: HeadFile,
}

impl TryFrom<DbnFile> for Dbn {
    type Error = Error;

    fn try_from(f: DbnFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    w: Matrix::new(l.outputs, l.inputs, l.w)?,
                    b: l.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dbn::from_parts(layers, Matrix::new(CLASSES, f.head.inputs, f.head.w)?, f.head.b)
    }
}

impl From<Dbn> for DbnFile {
    fn from(d: Dbn) -> Self {
        DbnFile {
            layers: d
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    w: l.w.into_values(),
                    b: l.b,
                })
                .collect(),
            head: HeadFile {
                inputs: d.head_w.cols(),
                w: d.head_w.into_values(),
                b: d.head_b,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 200,
            seed: 0,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput(
                "fine-tune config needs batch_size and epochs of at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning_rate {} must be a non-negative finite number",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Output of [`greedy_pretrain`]: the untuned network plus the RBMs it was
/// built from and their reconstruction curves, one per layer.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub dbn: Dbn,
    pub rbms: Vec<Rbm>,
    pub curves: Vec<ErrorCurve>,
}

/// Seeds `(init, cd)` for the RBM at `layer` of a stack trained with `seed`.
pub fn layer_seeds(seed: u64, layer: usize) -> (u64, u64) {
    (
        mix_seed(&[seed, 2 * layer as u64]),
        mix_seed(&[seed, 2 * layer as u64 + 1]),
    )
}

/// Trains one RBM per entry of `layer_sizes`. The first sees `train_x`; each
/// later one sees the hidden probabilities of the previous trained RBM.
pub fn greedy_pretrain(layer_sizes: &[usize], train_x: &Matrix, cd: &CdConfig) -> Result<Pretrained> {
    if layer_sizes.is_empty() {
        return Err(Error::InvalidInput("need at least one hidden layer".into()));
    }
    if train_x.cols() == 0 {
        return Err(Error::dims("greedy_pretrain", "input has no columns"));
    }
    let mut input = train_x.clone();
    let mut rbms = Vec::with_capacity(layer_sizes.len());
    let mut curves = Vec::with_capacity(layer_sizes.len());
    for (i, &hidden) in layer_sizes.iter().enumerate() {
        let (init_seed, cd_seed) = layer_seeds(cd.seed, i);
        let cfg = CdConfig { seed: cd_seed, ..*cd };
        let rbm = Rbm::init(input.cols(), hidden, init_seed)?;
        let (trained, curve) = if i == 0 {
            rbm.pretrain(&input, &cfg)?
        } else {
            rbm.pretrain_soft(&input, &cfg)?
        };
        if i + 1 < layer_sizes.len() {
            input = trained.prop_up(&input)?;
        }
        rbms.push(trained);
        curves.push(curve);
    }
    let last = *layer_sizes.last().unwrap();
    let mut head_rng = SeededRng::new(mix_seed(&[cd.seed, HEAD_STREAM]));
    let head_w = Matrix::random_normal(CLASSES, last, 0.0, INIT_STD, &mut head_rng);
    let layers = rbms.iter().cloned().map(Layer::from).collect();
    Ok(Pretrained {
        dbn: Dbn::from_parts(layers, head_w, vec![0.0; CLASSES])?,
        rbms,
        curves,
    })
}

/// Argmax per row of a `n × 2` probability matrix; ties go to class 0.
pub fn argmax_labels(probs: &Matrix) -> Vec<u8> {
    probs.iter_rows().map(|r| u8::from(r[1] > r[0])).collect()
}

impl Dbn {
    pub fn from_parts(layers: Vec<Layer>, head_w: Matrix, head_b: Vec<f64>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.outputs() || l.outputs() == 0 || l.inputs() == 0 {
                return Err(Error::dims(
                    "Dbn::from_parts",
                    format!("layer {i}: weights {:?} with bias of {}", l.w.shape(), l.b.len()),
                ));
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return Err(Error::dims(
                    "Dbn::from_parts",
                    format!(
                        "layer {} outputs {} but layer {i} takes {}",
                        i - 1,
                        layers[i - 1].outputs(),
                        l.inputs()
                    ),
                ));
            }
            if l.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Dbn::from_parts"));
            }
        }
        let top = layers.last().map_or(0, Layer::outputs);
        if layers.is_empty() || head_w.shape() != (CLASSES, top) || head_b.len() != CLASSES {
            return Err(Error::dims(
                "Dbn::from_parts",
                format!(
                    "head weights {:?} and bias of {} over a top layer of {top}",
                    head_w.shape(),
                    head_b.len()
                ),
            ));
        }
        if head_b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Dbn::from_parts"));
        }
        Ok(Self { layers, head_w, head_b })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head_weights(&self) -> &Matrix {
        &self.head_w
    }

    pub fn head_bias(&self) -> &[f64] {
        &self.head_b
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(
                "dbn",
                format!("{} input columns for a network over {}", x.cols(), self.input_dim()),
            ));
        }
        Ok(())
    }

    /// Activations of every hidden layer, bottom first.
    fn activations(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let a = l.apply(acts.last().unwrap_or(x))?;
            acts.push(a);
        }
        Ok(acts)
    }

    fn head_logits(&self, top: &Matrix) -> Result<Matrix> {
        let mut z = top.matmul_nt(&self.head_w)?;
        z.add_row_vector(&self.head_b)?;
        Ok(z)
    }

    /// Pre-softmax outputs, `n × 2`.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let acts = self.activations(x)?;
        self.head_logits(acts.last().unwrap())
    }

    /// Class probabilities, `n × 2`; column 1 is malicious.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.logits(x)?;
        let mut values = Vec::with_capacity(z.as_slice().len());
        for row in z.iter_rows() {
            values.extend(softmax(row)?);
        }
        Matrix::new(z.rows(), CLASSES, values)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(argmax_labels(&self.forward(x)?))
    }

    /// Mean categorical cross-entropy against one-hot targets.
    pub fn loss(&self, x: &Matrix, y: &[u8]) -> Result<f64> {
        check_labels(x, y)?;
        let z = self.logits(x)?;
        Ok(mean_cross_entropy(&z, y))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter,
    /// returned in the shape of the network itself.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[u8]) -> Result<(f64, Dbn)> {
        check_labels(x, y)?;
        self.check_input(x)?;
        let acts = self.activations(x)?;
        let top = acts.last().unwrap();
        let z = self.head_logits(top)?;
        let loss = mean_cross_entropy(&z, y);

        let n = x.rows() as f64;
        let mut delta = Vec::with_capacity(z.as_slice().len());
        for (row, &label) in z.iter_rows().zip(y) {
            let lse = log_sum_exp(row);
            for (c, &zc) in row.iter().enumerate() {
                let target = if c == label as usize { 1.0 } else { 0.0 };
                delta.push(((zc - lse).exp() - target) / n);
            }
        }
        let delta = Matrix::new(z.rows(), CLASSES, delta)?;
        let head_w = delta.matmul_tn(top)?;
        let head_b = column_sums(&delta);

        let mut back = sigmoid_backprop(delta.matmul(&self.head_w)?, top);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            grads.push(Layer {
                w: back.matmul_tn(input)?,
                b: column_sums(&back),
            });
            if i > 0 {
                back = sigmoid_backprop(back.matmul(&self.layers[i].w)?, &acts[i - 1]);
            }
        }
        grads.reverse();
        Ok((
            loss,
            Dbn {
                layers: grads,
                head_w,
                head_b,
            },
        ))
    }

    /// `self -= rate · grad`.
    fn descend(&mut self, rate: f64, grad: &Dbn) -> Result<()> {
        let step = |p: &mut [f64], g: &[f64]| {
            for (p, g) in p.iter_mut().zip(g) {
                *p -= rate * g;
            }
        };
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            step(l.w.values_mut(), g.w.as_slice());
            step(&mut l.b, &g.b);
        }
        step(self.head_w.values_mut(), grad.head_w.as_slice());
        step(&mut self.head_b, &grad.head_b);
        if self.parameters().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("fine_tune"))
        }
    }

    pub fn fine_tune(&self, train: &EncodedDataset, cfg: &FineTuneConfig) -> Result<(Dbn, LossCurve)> {
        let y = train
            .labels()
            .map_err(|_| Error::InvalidInput("fine-tuning needs a labeled dataset".into()))?;
        self.fine_tune_xy(&train.x, y, cfg)
    }

    /// Minibatch gradient descent. Each epoch permutes the rows with the run
    /// generator (seeded with `cfg.seed`); the curve holds the sample-weighted
    /// mean of the pre-update batch losses.
    pub fn fine_tune_xy(&self, x: &Matrix, y: &[u8], cfg: &FineTuneConfig) -> Result<(Dbn, LossCurve)> {
        cfg.validate()?;
        check_labels(x, y)?;
        self.check_input(x)?;
        if x.rows() == 0 {
            return Err(Error::InvalidInput("no fine-tuning data".into()));
        }
        let mut net = self.clone();
        let mut rng = SeededRng::new(cfg.seed);
        let mut curve = LossCurve::default();
        for _ in 0..cfg.epochs {
            let order = rng.permutation(x.rows());
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let bx = x.select_rows(chunk);
                let by: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
                let (loss, grad) = net.loss_and_gradient(&bx, &by)?;
                total += loss * chunk.len() as f64;
                if cfg.learning_rate != 0.0 {
                    net.descend(cfg.learning_rate, &grad)?;
                }
            }
            curve.push(total / x.rows() as f64);
        }
        Ok((net, curve))
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().len()
    }

    /// All parameters flattened: each layer's weights then bias, then the
    /// head's weights then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out.extend_from_slice(self.head_w.as_slice());
        out.extend_from_slice(&self.head_b);
        out
    }

    /// Copy with parameters replaced from a vector in [`Dbn::parameters`] order.
    pub fn with_parameters(&self, params: &[f64]) -> Result<Dbn> {
        if params.len() != self.parameter_count() {
            return Err(Error::dims(
                "with_parameters",
                format!("{} values for {} parameters", params.len(), self.parameter_count()),
            ));
        }
        let mut next = self.clone();
        let mut it = params.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().unwrap());
        for l in &mut next.layers {
            fill(l.w.values_mut());
            fill(&mut l.b);
        }
        fill(next.head_w.values_mut());
        fill(&mut next.head_b);
        if next.parameters().iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::NonFinite("with_parameters"))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dbn serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("dbn json: {e}")))
    }
}

fn check_labels(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::dims(
            "labels",
            format!("{} rows with {} labels", x.rows(), y.len()),
        ));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

pub(crate) fn mean_cross_entropy(logits: &Matrix, y: &[u8]) -> f64 {
    let total: f64 = logits
        .iter_rows()
        .zip(y)
        .map(|(row, &l)| log_sum_exp(row) - row[l as usize])
        .sum();
    total / y.len().max(1) as f64
}

pub(crate) fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums
}

/// `grad ⊙ a ⊙ (1 − a)` for sigmoid activations `a`.
fn sigmoid_backprop(mut grad: Matrix, a: &Matrix) -> Matrix {
    for (g, &s) in grad.values_mut().iter_mut().zip(a.as_slice()) {
        *g *= s * (1.0 - s);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid_scalar;

    fn random_net(sizes: &[usize], seed: u64, scale: f64) -> Dbn {
        let mut rng = SeededRng::new(seed);
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                w: Matrix::random_normal(w[1], w[0], 0.0, scale, &mut rng),
                b: (0..w[1]).map(|_| rng.normal(0.0, scale)).collect(),
            })
            .collect();
        let top = *sizes.last().unwrap();
        let head_w = Matrix::random_normal(2, top, 0.0, scale, &mut rng);
        let head_b = vec![rng.normal(0.0, scale), rng.normal(0.0, scale)];
        Dbn::from_parts(layers, head_w, head_b).unwrap()
    }

    fn random_bits(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.below(2) as f64).collect()).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Dbn::from_parts(
            vec![Layer { w: Matrix::zeros(3, 4), b: vec![0.0; 3] }],
            Matrix::zeros(2, 3),
            vec![0.0; 2],
        )
        .unwrap();
        let p = net.forward(&random_bits(5, 4, 1)).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.5));
        assert_eq!(net.predict(&random_bits(5, 4, 1)).unwrap(), vec![0; 5]);
    }

    #[test]
    fn hand_traced_forward() {
        // 2 -> 2 -> 2 with fixed weights
        let net = Dbn::from_parts(
            vec![Layer {
                w: Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap(),
                b: vec![0.1, -0.3],
            }],
            Matrix::from_rows(&[[1.0, -2.0], [-0.5, 1.5]]).unwrap(),
            vec![0.2, -0.1],
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let h0 = sigmoid_scalar(0.5 - 1.0 + 0.1);
        let h1 = sigmoid_scalar(2.0 + 0.25 - 0.3);
        let z0 = h0 - 2.0 * h1 + 0.2;
        let z1 = -0.5 * h0 + 1.5 * h1 - 0.1;
        let p1 = z1.exp() / (z0.exp() + z1.exp());
        let p = net.forward(&x).unwrap();
        assert!((p.get(0, 1) - p1).abs() < 1e-14);
        assert!((p.get(0, 0) - (1.0 - p1)).abs() < 1e-14);
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = random_net(&[6, 4, 3], 2, 0.8);
        let x = random_bits(5, 6, 3);
        let batch = net.forward(&x).unwrap();
        for r in 0..5 {
            let single = net.forward(&x.select_rows(&[r])).unwrap();
            assert_eq!(single.row(0), batch.row(r));
        }
    }

    #[test]
    fn forward_rows_sum_to_one() {
        for seed in 0..1000u64 {
            let sizes = [3 + seed as usize % 4, 2 + seed as usize % 5];
            let net = random_net(&sizes, seed, 3.0);
            let p = net.forward(&random_bits(4, sizes[0], seed ^ 0xff)).unwrap();
            for row in p.iter_rows() {
                assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn predict_tie_break_and_argmax() {
        let probs = Matrix::from_rows(&[[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert_eq!(argmax_labels(&probs), vec![0, 0, 1]);
        let net = random_net(&[5, 4], 8, 2.0);
        let x = random_bits(40, 5, 9);
        let p = net.forward(&x).unwrap();
        let independent: Vec<u8> = p
            .iter_rows()
            .map(|r| if r[1] > r[0] { 1 } else { 0 })
            .collect();
        assert_eq!(net.predict(&x).unwrap(), independent);
    }

    #[test]
    fn logit_shift_keeps_predictions() {
        let net = random_net(&[5, 4], 4, 2.0);
        let x = random_bits(30, 5, 5);
        let base = net.predict(&x).unwrap();
        for shift in [-7.0, 0.3, 50.0] {
            let mut b = net.head_bias().to_vec();
            b.iter_mut().for_each(|v| *v += shift);
            let shifted =
                Dbn::from_parts(net.layers().to_vec(), net.head_weights().clone(), b).unwrap();
            assert_eq!(shifted.predict(&x).unwrap(), base);
        }
    }

    #[test]
    fn greedy_dimension_chain() {
        let x = random_bits(20, 16, 1);
        let cd = CdConfig { epochs: 2, ..CdConfig::default() };
        let p = greedy_pretrain(&[8, 4], &x, &cd).unwrap();
        let dims: Vec<(usize, usize)> = p.dbn.layers().iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(dims, vec![(16, 8), (8, 4)]);
        assert_eq!(p.dbn.head_weights().shape(), (2, 4));
        assert!(p.dbn.head_bias().iter().all(|&b| b == 0.0));
        assert_eq!(p.curves.len(), 2);
        assert!(greedy_pretrain(&[], &x, &cd).is_err());
        assert!(p.dbn.forward(&random_bits(2, 15, 1)).is_err());
    }

    #[test]
    fn single_layer_stack_trains_one_rbm() {
        let x = random_bits(10, 6, 4);
        let cd = CdConfig { epochs: 1, ..CdConfig::default() };
        let p = greedy_pretrain(&[512], &x, &cd).unwrap();
        assert_eq!(p.rbms.len(), 1);
        assert_eq!(p.dbn.layers()[0].outputs(), 512);
    }

    #[test]
    fn second_rbm_sees_first_rbm_probabilities() {
        let x = random_bits(30, 10, 6);
        let cd = CdConfig { epochs: 3, batch_size: 8, seed: 12, ..CdConfig::default() };
        let p = greedy_pretrain(&[6, 3], &x, &cd).unwrap();
        let input = p.rbms[0].prop_up(&x).unwrap();
        let (init_seed, cd_seed) = layer_seeds(12, 1);
        let (expected, curve) = Rbm::init(6, 3, init_seed)
            .unwrap()
            .pretrain_soft(&input, &CdConfig { seed: cd_seed, ..cd })
            .unwrap();
        assert_eq!(p.rbms[1], expected);
        assert_eq!(p.curves[1], curve);
    }

    #[test]
    fn zero_rate_fine_tune_is_flat() {
        let net = random_net(&[4, 3], 1, 0.5);
        let x = random_bits(37, 4, 2);
        let y: Vec<u8> = (0..37).map(|i| (i % 2) as u8).collect();
        let cfg = FineTuneConfig { learning_rate: 0.0, epochs: 5, batch_size: 8, seed: 1 };
        let (out, curve) = net.fine_tune_xy(&x, &y, &cfg).unwrap();
        assert_eq!(out, net);
        let first = curve.first().unwrap();
        assert!(curve.values().all(|v| (v - first).abs() < 1e-12));
    }

    #[test]
    fn fine_tune_rejects_unlabeled() {
        use crate::features::{build_vocab, encode, AppSample, Corpus};
        let corpus = Corpus {
            zones: vec!["Z".into()],
            samples: vec![AppSample {
                id: "a".into(),
                permissions: Default::default(),
                api_calls: Default::default(),
                behaviors: Default::default(),
                zone: "Z".into(),
                label: None,
            }],
        };
        let ds = encode(&corpus, &build_vocab(&corpus).unwrap()).unwrap();
        let net = random_net(&[1, 2], 0, 0.1);
        assert!(net.fine_tune(&ds, &FineTuneConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_on_deeper_net() {
        let net = random_net(&[5, 4, 3], 31, 0.7);
        let x = random_bits(6, 5, 3);
        let y = vec![0, 1, 1, 0, 1, 0];
        let (_, grad) = net.loss_and_gradient(&x, &y).unwrap();
        let analytic = grad.parameters();
        let params = net.parameters();
        let eps = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += eps;
            let mut minus = params.clone();
            minus[i] -= eps;
            let lp = net.with_parameters(&plus).unwrap().loss(&x, &y).unwrap();
            let lm = net.with_parameters(&minus).unwrap().loss(&x, &y).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(rel <= 1e-4, "param {i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let net = random_net(&[6, 4, 3], 3, 0.4);
        assert_eq!(Dbn::from_json(&net.to_json()).unwrap(), net);
        let v: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        assert_eq!(v["layers"].as_array().unwrap().len(), 2);
        assert_eq!(v["head"]["w"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn from_parts_rejects_broken_chain() {
        let layers = vec![
            Layer { w: Matrix::zeros(3, 4), b: vec![0.0; 3] },
            Layer { w: Matrix::zeros(2, 5), b: vec![0.0; 2] },
        ];
        assert!(Dbn::from_parts(layers, Matrix::zeros(2, 2), vec![0.0; 2]).is_err());
    }
}
