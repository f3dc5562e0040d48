//! Bernoulli-Bernoulli restricted Boltzmann machine trained by contrastive
//! divergence.
//!
//! One CD-k step on a minibatch `v0` (rows are samples):
//!
//! 1. `h0_prob = σ(v0·Wᵀ + c)`, `h = bernoulli(h0_prob)`
//! 2. repeat `k` times: `v_rec = σ(h·W + b)`, `h_prob = σ(v_rec·Wᵀ + c)`, and
//!    resample `h = bernoulli(h_prob)` on every pass except the last
//! 3. `W += lr·(h0_probᵀ·v0 − hk_probᵀ·v_rec)/n`, `b += lr·mean(v0 − v_rec)`,
//!    `c += lr·mean(h0_prob − hk_prob)`
//!
//! The reconstruction `v_rec` is kept as probabilities and is also what the
//! returned mean squared error `mean((v0 − v_rec)²)` is measured against.
//! Random draws happen only in the Bernoulli sampling of hidden states, one
//! uniform per entry in row-major order.

use serde::{Deserialize, Serialize};

use crate::curve::ErrorCurve;
use crate::error::{Error, Result};
use crate::tensor::{bernoulli_sample, sigmoid, Matrix, SeededRng};

/// Standard deviation of the Gaussian used to initialize weights.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbmFile", into = "RbmFile")]
pub struct Rbm {
    /// `hidden × visible`.
    w: Matrix,
    vbias: Vec<f64>,
    hbias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RbmFile {
    visible: usize,
    hidden: usize,
    w: Vec<f64>,
    vbias: Vec<f64>,
    hbias: Vec<f64>,
}

impl TryFrom<RbmFile> for Rbm {
    type Error = Error;

    fn try_from(f: RbmFile) -> Result<Self> {
        Rbm::from_parts(Matrix::new(f.hidden, f.visible, f.w)?, f.vbias, f.hbias)
    }
}

impl From<Rbm> for RbmFile {
    fn from(r: Rbm) -> Self {
        RbmFile {
            visible: r.visible(),
            hidden: r.hidden(),
            w: r.w.into_values(),
            vbias: r.vbias,
            hbias: r.hbias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdConfig {
    /// Gibbs steps per update.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 200,
            seed: 0,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput(
                "CD config needs k, batch_size and epochs of at least 1".into(),
            ));
        }
        // lr = 0 is tolerated so frozen-parameter runs remain expressible
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning_rate {} must be a non-negative finite number",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Intermediate quantities of one CD step, exposed for inspection.
#[derive(Debug, Clone)]
pub struct CdTrace {
    pub h0_prob: Matrix,
    pub h0_sample: Matrix,
    pub v_rec: Matrix,
    pub hk_prob: Matrix,
    pub mse: f64,
}

impl Rbm {
    pub fn init(visible: usize, hidden: usize, seed: u64) -> Result<Self> {
        if visible == 0 || hidden == 0 {
            return Err(Error::InvalidInput(format!(
                "RBM needs nonzero layer sizes, got {visible} visible and {hidden} hidden"
            )));
        }
        let mut rng = SeededRng::new(seed);
        Ok(Self {
            w: Matrix::random_normal(hidden, visible, 0.0, INIT_STD, &mut rng),
            vbias: vec![0.0; visible],
            hbias: vec![0.0; hidden],
        })
    }

    /// `w` is `hidden × visible`.
    pub fn from_parts(w: Matrix, vbias: Vec<f64>, hbias: Vec<f64>) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 || vbias.len() != w.cols() || hbias.len() != w.rows() {
            return Err(Error::dims(
                "Rbm::from_parts",
                format!(
                    "weights {:?} with {} visible and {} hidden biases",
                    w.shape(),
                    vbias.len(),
                    hbias.len()
                ),
            ));
        }
        if vbias.iter().chain(&hbias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Rbm::from_parts"));
        }
        Ok(Self { w, vbias, hbias })
    }

    pub fn visible(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn vbias(&self) -> &[f64] {
        &self.vbias
    }

    pub fn hbias(&self) -> &[f64] {
        &self.hbias
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>, Vec<f64>) {
        (self.w, self.vbias, self.hbias)
    }

    /// Hidden activation probabilities for a batch of visible rows.
    pub fn prop_up(&self, v: &Matrix) -> Result<Matrix> {
        if v.cols() != self.visible() {
            return Err(Error::dims(
                "prop_up",
                format!("{} columns for {} visible units", v.cols(), self.visible()),
            ));
        }
        let mut pre = v.matmul_nt(&self.w)?;
        pre.add_row_vector(&self.hbias)?;
        Ok(sigmoid(&pre))
    }

    /// Visible reconstruction probabilities for a batch of hidden rows.
    pub fn prop_down(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.hidden() {
            return Err(Error::dims(
                "prop_down",
                format!("{} columns for {} hidden units", h.cols(), self.hidden()),
            ));
        }
        let mut pre = h.matmul(&self.w)?;
        pre.add_row_vector(&self.vbias)?;
        Ok(sigmoid(&pre))
    }

    /// One CD-k update; returns the updated machine and the batch MSE.
    pub fn cd_step(&self, batch: &Matrix, cfg: &CdConfig, rng: &mut SeededRng) -> Result<(Rbm, f64)> {
        let mut next = self.clone();
        let trace = next.cd_update(batch, cfg, rng, true)?;
        Ok((next, trace.mse))
    }

    /// Like [`Rbm::cd_step`] but also returns the intermediates.
    pub fn cd_step_traced(
        &self,
        batch: &Matrix,
        cfg: &CdConfig,
        rng: &mut SeededRng,
    ) -> Result<(Rbm, CdTrace)> {
        let mut next = self.clone();
        let trace = next.cd_update(batch, cfg, rng, true)?;
        Ok((next, trace))
    }

    fn cd_update(
        &mut self,
        v0: &Matrix,
        cfg: &CdConfig,
        rng: &mut SeededRng,
        binary: bool,
    ) -> Result<CdTrace> {
        cfg.validate()?;
        if v0.rows() == 0 {
            return Err(Error::InvalidInput("empty CD batch".into()));
        }
        if binary && !v0.is_binary() {
            return Err(Error::InvalidInput("CD batch entries must be 0 or 1".into()));
        }
        let h0_prob = self.prop_up(v0)?;
        let h0_sample = bernoulli_sample(&h0_prob, rng)?;
        let mut h = h0_sample.clone();
        let mut v_rec = Matrix::zeros(0, 0);
        let mut hk_prob = Matrix::zeros(0, 0);
        for step in 1..=cfg.k {
            v_rec = self.prop_down(&h)?;
            hk_prob = self.prop_up(&v_rec)?;
            if step < cfg.k {
                h = bernoulli_sample(&hk_prob, rng)?;
            }
        }

        let diff = v0.sub(&v_rec)?;
        let mse = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / diff.as_slice().len() as f64;

        if cfg.learning_rate != 0.0 {
            let scale = cfg.learning_rate / v0.rows() as f64;
            let mut w = self.w.clone();
            w.add_scaled_tn(scale, &h0_prob, v0)?;
            w.add_scaled_tn(-scale, &hk_prob, &v_rec)?;
            let dv = diff.column_means();
            let dh = h0_prob.sub(&hk_prob)?.column_means();
            for (b, d) in self.vbias.iter_mut().zip(dv) {
                *b += cfg.learning_rate * d;
            }
            for (c, d) in self.hbias.iter_mut().zip(dh) {
                *c += cfg.learning_rate * d;
            }
            if self.vbias.iter().chain(&self.hbias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("cd_step"));
            }
            self.w = w;
        }
        Ok(CdTrace {
            h0_prob,
            h0_sample,
            v_rec,
            hk_prob,
            mse,
        })
    }

    /// Minibatch CD over `epochs` sweeps. Each epoch draws a fresh row
    /// permutation from the run generator (seeded with `cfg.seed`), then
    /// visits consecutive batches of `batch_size` rows; a short final batch is
    /// kept. The curve holds the mean batch MSE of each epoch.
    pub fn pretrain(&self, data: &Matrix, cfg: &CdConfig) -> Result<(Rbm, ErrorCurve)> {
        if !data.is_binary() {
            return Err(Error::InvalidInput("pre-training data must be binary".into()));
        }
        self.pretrain_impl(data, cfg, true)
    }

    /// [`Rbm::pretrain`] on visible values in `[0, 1]` treated as
    /// probabilities, as produced by the layer below in a stack.
    pub fn pretrain_soft(&self, data: &Matrix, cfg: &CdConfig) -> Result<(Rbm, ErrorCurve)> {
        if data.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("visible values must lie in [0, 1]".into()));
        }
        self.pretrain_impl(data, cfg, false)
    }

    fn pretrain_impl(&self, data: &Matrix, cfg: &CdConfig, binary: bool) -> Result<(Rbm, ErrorCurve)> {
        cfg.validate()?;
        if data.rows() == 0 {
            return Err(Error::InvalidInput("no pre-training data".into()));
        }
        if data.cols() != self.visible() {
            return Err(Error::dims(
                "pretrain",
                format!("{} columns for {} visible units", data.cols(), self.visible()),
            ));
        }
        let mut rbm = self.clone();
        let mut rng = SeededRng::new(cfg.seed);
        let mut curve = ErrorCurve::default();
        for _ in 0..cfg.epochs {
            let order = rng.permutation(data.rows());
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let batch = data.select_rows(chunk);
                total += rbm.cd_update(&batch, cfg, &mut rng, binary)?.mse;
                batches += 1;
            }
            curve.push(total / batches as f64);
        }
        Ok((rbm, curve))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rbm serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("rbm json: {e}")))
    }
}
