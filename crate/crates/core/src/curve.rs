use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub value: f64,
}

/// Per-epoch training metric; epochs start at 1 and increase by one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

/// Reconstruction mean-squared error per pre-training epoch.
pub type ErrorCurve = Curve;
/// Mean categorical cross-entropy per fine-tuning epoch.
pub type LossCurve = Curve;

impl Curve {
    pub fn push(&mut self, value: f64) {
        let epoch = self.points.len() + 1;
        self.points.push(CurvePoint { epoch, value });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.value)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.value)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }

    /// Value recorded at `epoch` (1-based).
    pub fn at(&self, epoch: usize) -> Option<f64> {
        epoch.checked_sub(1).and_then(|i| self.points.get(i)).map(|p| p.value)
    }

    /// Pointwise mean over curves; epoch `e` averages every curve that reaches it.
    pub fn pointwise_mean<'a>(curves: impl IntoIterator<Item = &'a Curve>) -> Curve {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for c in curves {
            if sums.len() < c.len() {
                sums.resize(c.len(), (0.0, 0));
            }
            for (s, v) in sums.iter_mut().zip(c.values()) {
                s.0 += v;
                s.1 += 1;
            }
        }
        let mut out = Curve::default();
        for (sum, count) in sums {
            out.push(sum / count as f64);
        }
        out
    }
}
