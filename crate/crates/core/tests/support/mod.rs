#![allow(dead_code)]

use ndarray::Array2;
use probekit::probe::{rng_from_seed, Activation, ProbeParams, ProbeRng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ProbeRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Randomised weights (including biases) so no gradient is trivially zero.
pub fn random_params(
    dim: usize,
    k: usize,
    mlp: Option<(usize, Activation)>,
    rng: &mut ProbeRng,
) -> ProbeParams {
    let mut p = ProbeParams::init(dim, k, mlp, rng).unwrap();
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *v += 0.3 * n;
        }
    }
    p
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
    pub cases: usize,
}

fn relu_pattern(p: &ProbeParams, x: &Array2<f64>) -> Option<Vec<bool>> {
    let (_, cache) = p.forward(x.view()).unwrap();
    cache.pre.map(|pre| pre.iter().map(|&v| v > 0.0).collect())
}

/// Compares analytic gradients with central differences of the loss,
/// `(L(t + h) - L(t - h)) / 2h`, on randomly chosen coordinates.
///
/// A ReLU coordinate whose perturbation flips any unit's on/off state is
/// skipped and another one drawn: the difference quotient straddles a kink
/// there and does not estimate the derivative.
pub fn gradient_check(
    trials: usize,
    coords_per_case: usize,
    max_dim: usize,
    h: f64,
    seed: u64,
) -> GradReport {
    let mut rng = rng_from_seed(seed);
    let mut report = GradReport::default();
    for trial in 0..trials {
        for mlp_kind in [None, Some(Activation::Relu), Some(Activation::Tanh)] {
            report.cases += 1;
            let dim = rng.random_range(1..=max_dim);
            let k = rng.random_range(2..=6);
            let hidden = rng.random_range(1..=max_dim);
            let batch = rng.random_range(1..=8);
            let mlp = mlp_kind.map(|a| (hidden, a));
            let params = random_params(dim, k, mlp, &mut rng);
            let x = normal_matrix(batch, dim, &mut rng);
            let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
            let (_, grad) = params.loss_and_grad(x.view(), &labels).unwrap();
            let base_pattern = relu_pattern(&params, &x);
            let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
            let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
            let mut done = 0;
            let mut attempts = 0;
            while done < coords_per_case && attempts < 50 * coords_per_case {
                attempts += 1;
                let t = rng.random_range(0..sizes.len());
                let i = rng.random_range(0..sizes[t]);
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[t][i] += delta;
                    let pattern = relu_pattern(&p, &x);
                    (p.loss(x.view(), &labels).unwrap(), pattern)
                };
                let (up, pu) = eval(h);
                let (down, pd) = eval(-h);
                if mlp_kind == Some(Activation::Relu) && (pu != base_pattern || pd != base_pattern)
                {
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[t][i];
                let scale = a.abs().max(numeric.abs());
                let rel = if scale == 0.0 {
                    0.0
                } else {
                    (a - numeric).abs() / scale
                };
                if rel > report.max_rel {
                    report.max_rel = rel;
                    report.worst = format!(
                        "trial {trial} {mlp_kind:?} dim {dim} tensor {t} index {i}: analytic {a:e} numeric {numeric:e}"
                    );
                }
                report.checked += 1;
                done += 1;
            }
        }
    }
    report
}
