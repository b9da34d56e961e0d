use rayon::prelude::*;

use super::{TrainError, TrainingSample};
use crate::harmonic_basis::HarmonicBasis;
use crate::neural_net::Mlp;

/// Samples per parallel work unit; partial sums are reduced in chunk order.
const CHUNK: usize = 16;

/// A training sample with basis values and tangential derivatives tabulated at its
/// control points (row-major, one row of 2ℓ+1 entries per point).
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub input: Vec<f64>,
    pub values: Vec<f64>,
    pub tangential: Vec<f64>,
    pub target_values: Vec<f64>,
    pub target_derivatives: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub dim: usize,
    pub samples: Vec<PreparedSample>,
}

impl PreparedBatch {
    pub fn new(samples: &[TrainingSample], basis: &HarmonicBasis) -> Self {
        let d = basis.dim();
        let prepared = samples
            .par_iter()
            .map(|s| {
                let n = s.control_points.len();
                let mut values = vec![0.0; n * d];
                let mut tangential = vec![0.0; n * d];
                let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
                for (k, cp) in s.control_points.iter().enumerate() {
                    basis.values_at(cp.point, &mut values[k * d..(k + 1) * d]);
                    basis.gradients_at(cp.point, &mut gx, &mut gy);
                    for b in 0..d {
                        tangential[k * d + b] = cp.tangent.x * gx[b] + cp.tangent.y * gy[b];
                    }
                }
                PreparedSample {
                    input: s.input.clone(),
                    values,
                    tangential,
                    target_values: s.target_values.clone(),
                    target_derivatives: s.target_derivatives.clone(),
                }
            })
            .collect();
        Self { dim: d, samples: prepared }
    }

    pub fn num_points(&self) -> usize {
        self.samples.iter().map(|s| s.target_values.len()).sum()
    }
}

/// The two sums making up the loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub value: f64,
    pub derivative: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.value + self.derivative
    }
}

/// Per-point residuals (φ̂ − φ, ∂ₜφ̂ − ∂ₜφ) for coefficients `c`.
pub fn residuals(sample: &PreparedSample, dim: usize, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sample.target_values.len();
    let mut rv = Vec::with_capacity(n);
    let mut rt = Vec::with_capacity(n);
    for k in 0..n {
        let row = k * dim..(k + 1) * dim;
        let v: f64 = sample.values[row.clone()].iter().zip(c).map(|(a, b)| a * b).sum();
        let t: f64 = sample.tangential[row].iter().zip(c).map(|(a, b)| a * b).sum();
        rv.push(v - sample.target_values[k]);
        rt.push(t - sample.target_derivatives[k]);
    }
    (rv, rt)
}

fn sample_terms(sample: &PreparedSample, dim: usize, c: &[f64]) -> (LossTerms, Vec<f64>) {
    let (rv, rt) = residuals(sample, dim, c);
    let mut terms = LossTerms::default();
    let mut dc = vec![0.0; dim];
    for k in 0..rv.len() {
        terms.value += rv[k] * rv[k];
        terms.derivative += rt[k].powi(4);
        let (gv, gt) = (2.0 * rv[k], 4.0 * rt[k].powi(3));
        let row = k * dim..(k + 1) * dim;
        for ((d, a), b) in dc.iter_mut().zip(&sample.values[row.clone()]).zip(&sample.tangential[row]) {
            *d += gv * a + gt * b;
        }
    }
    (terms, dc)
}

/// ℒ = Σ_samples Σ_points [(φ̂ − φ)² + (∂ₜφ̂ − ∂ₜφ)⁴] and its gradient with respect to the
/// network parameters.
pub fn loss(net: &Mlp, batch: &PreparedBatch) -> Result<(LossTerms, Vec<f64>), TrainError> {
    if net.output_size() != batch.dim {
        return Err(TrainError::Config(format!(
            "network outputs {} coefficients, basis has {}",
            net.output_size(),
            batch.dim
        )));
    }
    let partials: Vec<(LossTerms, Vec<f64>)> = batch
        .samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut terms = LossTerms::default();
            let mut grad = vec![0.0; net.num_params()];
            for s in chunk {
                let cache = net.forward(&s.input)?;
                let (t, dc) = sample_terms(s, batch.dim, cache.output());
                terms.value += t.value;
                terms.derivative += t.derivative;
                net.backprop(&cache, &dc, &mut grad)?;
            }
            Ok((terms, grad))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; net.num_params()];
    for (t, g) in partials {
        terms.value += t.value;
        terms.derivative += t.derivative;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    if !terms.total().is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite("loss or gradient overflowed".into()));
    }
    Ok((terms, grad))
}

/// Loss of explicitly given coefficients for a single sample.
pub fn coefficient_loss(sample: &PreparedSample, dim: usize, c: &[f64]) -> LossTerms {
    sample_terms(sample, dim, c).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Polygon, PolygonSampler};
    use crate::harmonic_basis::{build_monomials, orthonormalize};
    use crate::neural_net::init_glorot;
    use crate::trainer::{build_dataset, polygon_samples, DatasetSpec};

    fn basis(ell: usize) -> HarmonicBasis {
        orthonormalize(build_monomials(ell, 6.0).unwrap(), 20).unwrap()
    }

    fn small_batch(ppe: usize) -> (HarmonicBasis, PreparedBatch) {
        let b = basis(2);
        let spec = DatasetSpec {
            nv: 4,
            sample_count: 3,
            points_per_edge: ppe,
            seed: 11,
            rho: 0.1,
            sampler: PolygonSampler::Star,
        };
        let data = build_dataset(&spec, &b).unwrap();
        let batch = PreparedBatch::new(&data, &b);
        (b, batch)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (_, batch) = small_batch(6);
        let mut net = init_glorot(&[6, 5, 5, 5], 4).unwrap();
        let (_, grad) = loss(&net, &batch).unwrap();
        let p0 = net.params().to_vec();
        let h = 1e-6;
        for i in (0..p0.len()).step_by(7) {
            let mut p = p0.clone();
            p[i] += h;
            net.set_params(&p).unwrap();
            let fp = loss(&net, &batch).unwrap().0.total();
            p[i] -= 2.0 * h;
            net.set_params(&p).unwrap();
            let fm = loss(&net, &batch).unwrap().0.total();
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-3);
            assert!((fd - grad[i]).abs() / scale < 1e-5, "param {i}: fd {fd}, analytic {}", grad[i]);
        }
    }

    #[test]
    fn zero_network_loss_equals_direct_sum() {
        let (_, batch) = small_batch(20);
        let mut net = init_glorot(&[6, 8, 5], 1).unwrap();
        net.set_params(&vec![0.0; net.num_params()]).unwrap();
        let (terms, _) = loss(&net, &batch).unwrap();
        // Oracle: each sample has two incident edges with 20 hat values k/19 and slope ±1/|e|.
        let mut expected = 0.0;
        let b = basis(2);
        let data = build_dataset(
            &DatasetSpec {
                nv: 4,
                sample_count: 3,
                points_per_edge: 20,
                seed: 11,
                rho: 0.1,
                sampler: PolygonSampler::Star,
            },
            &b,
        )
        .unwrap();
        let ramp: f64 = (0..20).map(|k| (k as f64 / 19.0).powi(2)).sum();
        for s in &data {
            let n = s.element.num_vertices();
            let e0 = s.element.edges()[0].length;
            let el = s.element.edges()[n - 1].length;
            expected += 2.0 * ramp + 20.0 * (e0.powi(-4) + el.powi(-4));
        }
        assert!((terms.total() - expected).abs() < 1e-10 * expected, "{} vs {expected}", terms.total());
    }

    #[test]
    fn doubling_density_roughly_doubles_loss() {
        let net = init_glorot(&[6, 8, 5], 9).unwrap();
        let (_, coarse) = small_batch(40);
        let (_, fine) = small_batch(80);
        let ratio = loss(&net, &fine).unwrap().0.total() / loss(&net, &coarse).unwrap().0.total();
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn affine_hat_on_triangle_is_representable() {
        let b = basis(1);
        let tri = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.1), Point2::new(0.3, 0.9)]).unwrap();
        let samples = polygon_samples(&tri, 0, 10, &b).unwrap();
        let batch = PreparedBatch::new(&samples, &b);
        for s in &batch.samples {
            // Least-squares fit of the values, then check both loss terms vanish.
            let n = s.target_values.len();
            let a = nalgebra::DMatrix::from_row_slice(n, 3, &s.values);
            let y = nalgebra::DVector::from_column_slice(&s.target_values);
            let c = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
            let t = coefficient_loss(s, 3, c.as_slice());
            assert!(t.value < 1e-20, "value term {}", t.value);
            assert!(t.derivative < 1e-20, "derivative term {}", t.derivative);
        }
    }
}
