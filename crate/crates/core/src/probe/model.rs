//! Linear probe, optionally preceded by a residual two-layer MLP:
//!
//! ```text
//! without: logits = X W + b
//! with:    Z = act(X W1 + b1) W2 + b2 + X,   logits = Z W + b
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::DatasetSplit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `a` and output `h`.
    fn grad(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlock {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub activation: Activation,
}

impl MlpBlock {
    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    fn check(&self) -> Result<()> {
        let (d, h) = self.w1.dim();
        let ok = self.b1.len() == h && self.w2.dim() == (h, d) && self.b2.len() == d;
        if !ok {
            return Err(Error::InvalidMatrix(format!(
                "mlp shapes W1 {:?}, b1 {}, W2 {:?}, b2 {} are inconsistent",
                self.w1.dim(),
                self.b1.len(),
                self.w2.dim(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    /// Residual output `act(X W1 + b1) W2 + b2 + X` with its intermediates.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w1) + &self.b1;
        let act = self.activation;
        let hidden = pre.mapv(|a| act.apply(a));
        let z = hidden.dot(&self.w2) + &self.b2 + x;
        (pre, hidden, z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearHead {
    pub fn n_classes(&self) -> usize {
        self.w.ncols()
    }

    pub fn logits(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        z.dot(&self.w) + &self.b
    }
}

/// Trainable probe parameters. Gradients and Adam moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub mlp: Option<MlpBlock>,
    pub head: LinearHead,
}

/// Intermediates kept by [`ProbeParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Array2<f64>,
    pub pre: Option<Array2<f64>>,
    pub hidden: Option<Array2<f64>>,
    /// Head input: `X` without the MLP, the residual output with it.
    pub z: Array2<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || s * (2.0 * rng.random::<f64>() - 1.0))
}

impl ProbeParams {
    /// Glorot-uniform weights, zero biases. Draw order: W1, W2, then W.
    pub fn init(
        dim: usize,
        n_classes: usize,
        mlp: Option<(usize, Activation)>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dim == 0 || n_classes == 0 || mlp.is_some_and(|(h, _)| h == 0) {
            return Err(Error::Config("probe dimensions must be positive".into()));
        }
        let mlp = mlp.map(|(hidden, activation)| MlpBlock {
            w1: glorot(dim, hidden, rng),
            b1: Array1::zeros(hidden),
            w2: glorot(hidden, dim, rng),
            b2: Array1::zeros(dim),
            activation,
        });
        let head = LinearHead {
            w: glorot(dim, n_classes, rng),
            b: Array1::zeros(n_classes),
        };
        Ok(Self { mlp, head })
    }

    pub fn dim(&self) -> usize {
        self.head.w.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mlp = self.mlp.as_ref().map(|m| MlpBlock {
            w1: Array2::zeros(m.w1.raw_dim()),
            b1: Array1::zeros(m.b1.raw_dim()),
            w2: Array2::zeros(m.w2.raw_dim()),
            b2: Array1::zeros(m.b2.raw_dim()),
            activation: m.activation,
        });
        Self {
            mlp,
            head: LinearHead {
                w: Array2::zeros(self.head.w.raw_dim()),
                b: Array1::zeros(self.head.b.raw_dim()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head.b.len() != self.head.w.ncols() {
            return Err(Error::InvalidMatrix(
                "head bias does not match head width".into(),
            ));
        }
        if let Some(m) = &self.mlp {
            m.check()?;
            if m.dim() != self.dim() {
                return Err(Error::DimMismatch {
                    expected: self.dim(),
                    got: m.dim(),
                    context: "mlp input vs head input",
                });
            }
        }
        Ok(())
    }

    /// Parameter tensors in W1, b1, W2, b2, W, b order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(6);
        if let Some(m) = &self.mlp {
            out.push(m.w1.as_slice().expect("standard layout"));
            out.push(m.b1.as_slice().expect("standard layout"));
            out.push(m.w2.as_slice().expect("standard layout"));
            out.push(m.b2.as_slice().expect("standard layout"));
        }
        out.push(self.head.w.as_slice().expect("standard layout"));
        out.push(self.head.b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(6);
        if let Some(m) = &mut self.mlp {
            out.push(m.w1.as_slice_mut().expect("standard layout"));
            out.push(m.b1.as_slice_mut().expect("standard layout"));
            out.push(m.w2.as_slice_mut().expect("standard layout"));
            out.push(m.b2.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.w.as_slice_mut().expect("standard layout"));
        out.push(self.head.b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.ncols(),
                context: "probe input",
            });
        }
        Ok(())
    }

    /// Features the head sees: `X`, or `MLP(X) + X` when the block is present.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(match &self.mlp {
            Some(m) => m.forward(x).2,
            None => x.to_owned(),
        })
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let cache = match &self.mlp {
            Some(m) => {
                let (pre, hidden, z) = m.forward(x);
                ForwardCache {
                    x: x.to_owned(),
                    pre: Some(pre),
                    hidden: Some(hidden),
                    z,
                }
            }
            None => ForwardCache {
                x: x.to_owned(),
                pre: None,
                hidden: None,
                z: x.to_owned(),
            },
        };
        Ok((self.head.logits(cache.z.view()), cache))
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.features(x)?;
        Ok(self.head.logits(z.view()))
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<(f64, ProbeParams)> {
        if labels.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if labels.len() != x.nrows() {
            return Err(Error::RowMismatch {
                what: "batch",
                left: x.nrows(),
                other: "labels",
                right: labels.len(),
            });
        }
        let k = self.n_classes();
        if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidLabel {
                label: bad,
                n_classes: k,
            });
        }
        let (logits, cache) = self.forward(x)?;
        let n = labels.len() as f64;

        // dL/dlogits = (softmax - onehot) / n
        let mut dlogits = logits;
        let mut loss = 0.0;
        for (mut row, &y) in dlogits.axis_iter_mut(Axis(0)).zip(labels) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            loss += sum.ln() - row[y].ln();
            row.mapv_inplace(|v| v / sum / n);
            row[y] -= 1.0 / n;
        }
        loss /= n;

        let head = LinearHead {
            w: cache.z.t().dot(&dlogits),
            b: dlogits.sum_axis(Axis(0)),
        };
        let mlp = match &self.mlp {
            None => None,
            Some(m) => {
                let dz = dlogits.dot(&self.head.w.t());
                let hidden = cache.hidden.as_ref().expect("mlp cache");
                let pre = cache.pre.as_ref().expect("mlp cache");
                let w2 = hidden.t().dot(&dz);
                let b2 = dz.sum_axis(Axis(0));
                let mut dpre = dz.dot(&m.w2.t());
                let act = m.activation;
                Zip::from(&mut dpre)
                    .and(pre)
                    .and(hidden)
                    .for_each(|d, &a, &h| *d *= act.grad(a, h));
                Some(MlpBlock {
                    w1: cache.x.t().dot(&dpre),
                    b1: dpre.sum_axis(Axis(0)),
                    w2,
                    b2,
                    activation: act,
                })
            }
        };
        Ok((loss, ProbeParams { mlp, head }))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(x)?;
        let mut loss = 0.0;
        for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[y];
        }
        Ok(loss / labels.len() as f64)
    }

    /// Class predictions; ties go to the lowest class id.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .logits(x)?
            .axis_iter(Axis(0))
            .map(|r| argmax(r.as_slice().expect("row")))
            .collect())
    }

    /// Fraction of rows whose argmax logit equals the label.
    pub fn accuracy(&self, split: &DatasetSplit) -> Result<f64> {
        if split.is_empty() {
            return Err(Error::Empty("split"));
        }
        const CHUNK: usize = 1024;
        let labels = split.labels.as_slice();
        let mut correct = 0usize;
        for start in (0..split.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(split.len());
            let x = rows_to_array(&split.embeddings, start..end);
            let pred = self.predict(x.view())?;
            correct += pred
                .iter()
                .zip(&labels[start..end])
                .filter(|(p, y)| p == y)
                .count();
        }
        Ok(correct as f64 / split.len() as f64)
    }
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Copies a contiguous row range of an embedding matrix into f64.
pub fn rows_to_array(
    m: &crate::dataio::EmbeddingMatrix,
    rows: std::ops::Range<usize>,
) -> Array2<f64> {
    let dim = m.dim();
    let values = &m.values()[rows.start * dim..rows.end * dim];
    Array2::from_shape_vec(
        (rows.len(), dim),
        values.iter().map(|&v| v as f64).collect(),
    )
    .expect("shape matches slice")
}

/// Gathers arbitrary rows of an embedding matrix into f64.
pub fn gather_rows(m: &crate::dataio::EmbeddingMatrix, idx: &[usize]) -> Array2<f64> {
    let dim = m.dim();
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend(m.row(i).iter().map(|&v| v as f64));
    }
    Array2::from_shape_vec((idx.len(), dim), out).expect("shape matches buffer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{EmbeddingMatrix, LabelVector};
    use crate::probe::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    fn identity_mlp(dim: usize) -> MlpBlock {
        MlpBlock {
            w1: Array2::eye(dim),
            b1: Array1::zeros(dim),
            w2: Array2::eye(dim),
            b2: Array1::zeros(dim),
            activation: Activation::Relu,
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = ProbeParams::init(5, 3, None, &mut rng_from_seed(1)).unwrap();
        assert!(p.mlp.is_none());
        assert_eq!(p.head.w.dim(), (5, 3));
        assert_eq!(p.head.b, Array1::<f64>::zeros(3));
        let a =
            ProbeParams::init(5, 3, Some((4, Activation::Relu)), &mut rng_from_seed(9)).unwrap();
        let b =
            ProbeParams::init(5, 3, Some((4, Activation::Relu)), &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mlp.as_ref().unwrap().w1.dim(), (5, 4));
        assert_eq!(a.mlp.as_ref().unwrap().w2.dim(), (4, 5));
        assert_eq!(a.n_params(), 5 * 4 + 4 + 4 * 5 + 5 + 5 * 3 + 3);
    }

    #[test]
    fn glorot_bound_at_full_width() {
        let p = ProbeParams::init(768, 2, Some((768, Activation::Relu)), &mut rng_from_seed(3))
            .unwrap();
        let w1 = &p.mlp.as_ref().unwrap().w1;
        assert_eq!(w1.dim(), (768, 768));
        let bound = (6.0f64 / 1536.0).sqrt();
        let max = w1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < bound);
        // the draws actually fill the range
        assert!(max > 0.99 * bound);
    }

    #[test]
    fn hand_computed_forward() {
        let p = ProbeParams {
            mlp: Some(identity_mlp(2)),
            head: LinearHead {
                w: Array2::eye(2),
                b: Array1::zeros(2),
            },
        };
        let x = arr2(&[[1.0, -1.0]]);
        let (logits, cache) = p.forward(x.view()).unwrap();
        assert_eq!(cache.hidden.unwrap(), arr2(&[[1.0, 0.0]]));
        assert_eq!(cache.z, arr2(&[[2.0, -1.0]]));
        assert_eq!(logits, arr2(&[[2.0, -1.0]]));
    }

    #[test]
    fn zero_branch_is_identity() {
        let mut mlp = identity_mlp(3);
        mlp.w2.fill(0.0);
        let p = ProbeParams {
            mlp: Some(mlp),
            head: LinearHead {
                w: Array2::eye(3),
                b: Array1::zeros(3),
            },
        };
        let x = arr2(&[[0.3, -2.0, 5.0], [1.0, 1.0, 1.0]]);
        assert_eq!(p.features(x.view()).unwrap(), x);
    }

    #[test]
    fn constant_head() {
        let p = ProbeParams {
            mlp: None,
            head: LinearHead {
                w: Array2::zeros((4, 2)),
                b: arr1(&[0.5, -0.5]),
            },
        };
        let x = arr2(&[[1.0, 2.0, 3.0, 4.0], [-9.0, 0.0, 0.0, 1.0]]);
        assert_eq!(
            p.logits(x.view()).unwrap(),
            arr2(&[[0.5, -0.5], [0.5, -0.5]])
        );
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let p = ProbeParams {
            mlp: None,
            head: LinearHead {
                w: Array2::zeros((3, 4)),
                b: Array1::zeros(4),
            },
        };
        let x = arr2(&[[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]]);
        let (loss, _) = p.loss_and_grad(x.view(), &[0, 3]).unwrap();
        assert_abs_diff_eq!(loss, 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 1.386294, epsilon = 1e-6);
    }

    #[test]
    fn loss_shrinks_with_margin() {
        let x = arr2(&[[1.0]]);
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 5.0, 20.0, 50.0] {
            let p = ProbeParams {
                mlp: None,
                head: LinearHead {
                    w: arr2(&[[margin, 0.0]]),
                    b: Array1::zeros(2),
                },
            };
            let loss = p.loss(x.view(), &[0]).unwrap();
            assert!(loss >= 0.0 && loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ProbeParams::init(3, 2, None, &mut rng_from_seed(0)).unwrap();
        let x = arr2(&[[1.0, 2.0]]);
        assert!(matches!(
            p.forward(x.view()),
            Err(Error::DimMismatch { .. })
        ));
        let x = arr2(&[[1.0, 2.0, 3.0]]);
        assert!(matches!(
            p.loss_and_grad(x.view(), &[2]),
            Err(Error::InvalidLabel { .. })
        ));
        assert!(p.loss_and_grad(x.view(), &[]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn zero_head_on_balanced_binary_is_half() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32, -(i as f32)]).collect();
        let m = EmbeddingMatrix::from_rows(&rows, 1).unwrap();
        let labels = LabelVector::new((0..10).map(|i| i % 2).collect(), 2).unwrap();
        let split = DatasetSplit::new(m, labels).unwrap();
        let p = ProbeParams {
            mlp: None,
            head: LinearHead {
                w: Array2::zeros((2, 2)),
                b: Array1::zeros(2),
            },
        };
        // every row predicts class 0; brute-force count of class-0 rows
        let class0 = split.labels.as_slice().iter().filter(|&&c| c == 0).count();
        assert_eq!(p.accuracy(&split).unwrap(), class0 as f64 / 10.0);
        assert_eq!(p.accuracy(&split).unwrap(), 0.5);
    }

    #[test]
    fn memorizing_probe_is_perfect() {
        // one-hot rows, identity head
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|i| (0..3).map(|j| if j == i % 3 { 1.0 } else { 0.0 }).collect())
            .collect();
        let m = EmbeddingMatrix::from_rows(&rows, 1).unwrap();
        let labels = LabelVector::new((0..10).map(|i| i % 3).collect(), 3).unwrap();
        let split = DatasetSplit::new(m, labels).unwrap();
        let p = ProbeParams {
            mlp: None,
            head: LinearHead {
                w: Array2::eye(3),
                b: Array1::zeros(3),
            },
        };
        assert_eq!(p.accuracy(&split).unwrap(), 1.0);
    }
}
