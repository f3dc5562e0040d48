//! Two-class softmax regression trained by minibatch gradient descent on
//! categorical cross-entropy.

use serde::{Deserialize, Serialize};

use super::tree::check_training;
use crate::curve::LossCurve;
use crate::dbn::{argmax_labels, column_sums, mean_cross_entropy, FineTuneConfig, CLASSES};
use crate::error::{Error, Result};
use crate::rbm::INIT_STD;
use crate::tensor::{log_sum_exp, mix_seed, softmax, Matrix, SeededRng};

const INIT_STREAM: u64 = 0x534d_5249;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegModel {
    /// `2 × d`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl SoftmaxRegModel {
    /// Gaussian(0, 0.01) weights from `mix_seed([seed, INIT_STREAM])`, zero bias.
    pub fn init(d: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(mix_seed(&[seed, INIT_STREAM]));
        Self {
            w: Matrix::random_normal(CLASSES, d, 0.0, INIT_STD, &mut rng),
            b: vec![0.0; CLASSES],
        }
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.w.cols() {
            return Err(Error::dims(
                "softmax_regression",
                format!("{} columns for a model over {}", x.cols(), self.w.cols()),
            ));
        }
        let mut z = x.matmul_nt(&self.w)?;
        z.add_row_vector(&self.b)?;
        Ok(z)
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.logits(x)?;
        let mut out = Vec::with_capacity(z.as_slice().len());
        for row in z.iter_rows() {
            out.extend(softmax(row)?);
        }
        Matrix::new(z.rows(), CLASSES, out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(argmax_labels(&self.probabilities(x)?))
    }

    pub fn loss(&self, x: &Matrix, y: &[u8]) -> Result<f64> {
        Ok(mean_cross_entropy(&self.logits(x)?, y))
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.rows() != CLASSES || self.b.len() != CLASSES {
            return Err(Error::dims("softmax_regression", "expected 2 output classes"));
        }
        Ok(())
    }
}

pub fn fit_softmax_regression(
    x: &Matrix,
    y: &[u8],
    cfg: &FineTuneConfig,
) -> Result<(SoftmaxRegModel, LossCurve)> {
    check_training(x, y)?;
    cfg.validate()?;
    let mut model = SoftmaxRegModel::init(x.cols(), cfg.seed);
    let mut rng = SeededRng::new(cfg.seed);
    let mut curve = LossCurve::default();
    for _ in 0..cfg.epochs {
        let order = rng.permutation(x.rows());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select_rows(chunk);
            let z = model.logits(&bx)?;
            let n = chunk.len() as f64;
            let mut delta = Vec::with_capacity(chunk.len() * CLASSES);
            for (row, &i) in z.iter_rows().zip(chunk) {
                let lse = log_sum_exp(row);
                total += lse - row[y[i] as usize];
                for (c, &zc) in row.iter().enumerate() {
                    let target = if c == y[i] as usize { 1.0 } else { 0.0 };
                    delta.push(((zc - lse).exp() - target) / n);
                }
            }
            if cfg.learning_rate == 0.0 {
                continue;
            }
            let delta = Matrix::new(chunk.len(), CLASSES, delta)?;
            model.w.add_scaled_tn(-cfg.learning_rate, &delta, &bx)?;
            for (b, g) in model.b.iter_mut().zip(column_sums(&delta)) {
                *b -= cfg.learning_rate * g;
            }
        }
        curve.push(total / x.rows() as f64);
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        Matrix::new(n, d, (0..n * d).map(|_| rng.below(2) as f64).collect()).unwrap()
    }

    #[test]
    fn zero_rate_keeps_init() {
        let x = bits(20, 5, 1);
        let y: Vec<u8> = x.iter_rows().map(|r| r[0] as u8).collect();
        let cfg = FineTuneConfig { learning_rate: 0.0, epochs: 3, ..FineTuneConfig::default() };
        let (m, _) = fit_softmax_regression(&x, &y, &cfg).unwrap();
        assert_eq!(m, SoftmaxRegModel::init(5, cfg.seed));
    }

    #[test]
    fn separable_label_is_learned() {
        let x = bits(300, 8, 2);
        let y: Vec<u8> = x.iter_rows().map(|r| r[3] as u8).collect();
        let (m, curve) = fit_softmax_regression(&x, &y, &FineTuneConfig::default()).unwrap();
        let acc = m.predict(&x).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 300.0;
        assert!(acc >= 0.99, "{acc}");
        assert!(curve.last().unwrap() < curve.first().unwrap());
    }

    #[test]
    fn parity_is_out_of_reach() {
        let x = bits(400, 6, 3);
        let y: Vec<u8> = x.iter_rows().map(|r| (r[0] as u8) ^ (r[1] as u8)).collect();
        let (m, _) = fit_softmax_regression(&x, &y, &FineTuneConfig::default()).unwrap();
        let acc = m.predict(&x).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 400.0;
        assert!(acc <= 0.6, "{acc}");
    }

    #[test]
    fn logit_shift_invariance() {
        let x = bits(50, 4, 4);
        let y: Vec<u8> = x.iter_rows().map(|r| r[1] as u8).collect();
        let (m, _) = fit_softmax_regression(&x, &y, &FineTuneConfig { epochs: 5, ..FineTuneConfig::default() }).unwrap();
        let shifted = SoftmaxRegModel { w: m.w.clone(), b: m.b.iter().map(|b| b + 12.5).collect() };
        assert_eq!(m.predict(&x).unwrap(), shifted.predict(&x).unwrap());
    }

    #[test]
    fn deterministic_by_seed() {
        let x = bits(40, 4, 5);
        let y: Vec<u8> = x.iter_rows().map(|r| r[2] as u8).collect();
        let cfg = FineTuneConfig { epochs: 4, seed: 3, ..FineTuneConfig::default() };
        assert_eq!(fit_softmax_regression(&x, &y, &cfg).unwrap(), fit_softmax_regression(&x, &y, &cfg).unwrap());
    }
}
