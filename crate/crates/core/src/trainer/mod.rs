//! Offline phase: datasets of exact boundary traces, the training loss, the Adam + BFGS
//! training loop and model persistence.

mod dataset;
mod loss;
mod model;

pub use dataset::{
    build_dataset, control_points, dataset_polygons, dataset_polygons_fitting, exact_trace, polygon_samples, samples_for_polygons, ControlPoint,
    DatasetSpec, TrainingSample,
};
pub use loss::{coefficient_loss, loss, residuals, LossTerms, PreparedBatch, PreparedSample};
pub use model::{NavemModel, TrainingMetadata, MODEL_FORMAT};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Polygon, PolygonSampler};
use crate::harmonic_basis::{build_monomials, orthonormalize, BasisError, HarmonicBasis};
use crate::neural_net::{bfgs_minimize, init_glorot, Adam, AdamConfig, BfgsConfig, NetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "polygon {polygon}, vertex {vertex}: canonical element leaves the reference square of diameter {h_ref}; increase the reference diameter"
    )]
    Containment { polygon: usize, vertex: usize, h_ref: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged in {phase} at iteration {iteration}: loss {loss:e}")]
    Divergence { phase: String, iteration: usize, loss: f64 },
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nv: usize,
    pub ell: usize,
    pub hidden: Vec<usize>,
    pub sample_count: usize,
    pub points_per_edge: usize,
    pub dataset_seed: u64,
    pub init_seed: u64,
    pub validation_seed: u64,
    pub validation_count: usize,
    pub adam_epochs: usize,
    pub adam: AdamConfig,
    pub bfgs: BfgsConfig,
    /// Diameter of the reference square carrying the harmonic basis.
    pub h_ref: f64,
    pub lattice_n: usize,
    pub rho: f64,
    pub sampler: PolygonSampler,
}

/// BFGS budget for full-scale training; the loss is still decreasing slowly when it runs out.
pub const DEFAULT_BFGS_ITERATIONS: usize = 25_000;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            nv: 4,
            ell: 5,
            hidden: vec![30, 30, 30],
            sample_count: 100,
            points_per_edge: 20,
            dataset_seed: 1,
            init_seed: 2,
            validation_seed: 3,
            validation_count: 20,
            adam_epochs: 3000,
            adam: AdamConfig::default(),
            bfgs: BfgsConfig {
                max_iterations: DEFAULT_BFGS_ITERATIONS,
                ..BfgsConfig::default()
            },
            h_ref: 9.0,
            lattice_n: 40,
            rho: 0.1,
            sampler: PolygonSampler::DistortedRegular,
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2 * (self.nv.max(1) - 1)];
        sizes.extend(&self.hidden);
        sizes.push(2 * self.ell + 1);
        sizes
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.nv < 3 {
            return Err(TrainError::Config(format!("nv must be >= 3, got {}", self.nv)));
        }
        if self.ell < 1 {
            return Err(TrainError::Config("ell must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(TrainError::Config("hidden layer sizes must be positive".into()));
        }
        if self.sample_count == 0 || self.points_per_edge < 2 {
            return Err(TrainError::Config(
                "need sample_count >= 1 and points_per_edge >= 2".into(),
            ));
        }
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return Err(TrainError::Config(format!("rho must lie in (0, 0.5), got {}", self.rho)));
        }
        if !(self.h_ref.is_finite() && self.h_ref > 0.0) || self.lattice_n < 2 {
            return Err(TrainError::Config("invalid reference square".into()));
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            nv: self.nv,
            sample_count: self.sample_count,
            points_per_edge: self.points_per_edge,
            seed: self.dataset_seed,
            rho: self.rho,
            sampler: self.sampler,
        }
    }

    pub fn validation_spec(&self) -> DatasetSpec {
        DatasetSpec {
            sample_count: self.validation_count,
            seed: self.validation_seed,
            ..self.dataset_spec()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Bfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Bfgs => "bfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phase: Phase,
    pub iteration: usize,
    pub loss: f64,
}

/// Boundary errors of predicted basis functions against the exact traces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_value_error: f64,
    pub mean_value_error: f64,
    pub max_derivative_error: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NavemModel,
    pub curve: Vec<CurvePoint>,
    pub validation: ValidationReport,
}

/// Training curve as CSV with header `phase,iteration,loss`.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("phase,iteration,loss\n");
    for p in curve {
        s.push_str(&format!("{},{},{:e}\n", p.phase.name(), p.iteration, p.loss));
    }
    s
}

pub fn build_basis(config: &TrainConfig) -> Result<HarmonicBasis, TrainError> {
    Ok(orthonormalize(build_monomials(config.ell, config.h_ref)?, config.lattice_n)?)
}

/// Errors of the network's predictions on prepared samples.
pub fn evaluate_batch(net: &crate::neural_net::Mlp, batch: &PreparedBatch) -> Result<ValidationReport, TrainError> {
    let mut report = ValidationReport::default();
    let mut sum = 0.0;
    for s in &batch.samples {
        let c = net.predict(&s.input)?;
        let (rv, rt) = residuals(s, batch.dim, &c);
        for (v, t) in rv.iter().zip(&rt) {
            report.max_value_error = report.max_value_error.max(v.abs());
            report.max_derivative_error = report.max_derivative_error.max(t.abs());
            sum += v.abs();
        }
        report.points += rv.len();
    }
    if report.points > 0 {
        report.mean_value_error = sum / report.points as f64;
    }
    Ok(report)
}

/// Errors of a model's basis functions on every vertex of `polygon`.
pub fn validate_on_polygon(model: &NavemModel, polygon: &Polygon, points_per_edge: usize) -> Result<ValidationReport, TrainError> {
    if polygon.num_vertices() != model.nv {
        return Err(TrainError::Config(format!(
            "model is for {}-gons, polygon has {} vertices",
            model.nv,
            polygon.num_vertices()
        )));
    }
    let samples = polygon_samples(polygon, 0, points_per_edge, &model.basis)?;
    evaluate_batch(&model.network, &PreparedBatch::new(&samples, &model.basis))
}

fn check_divergence(phase: Phase, iteration: usize, loss: f64) -> Result<(), TrainError> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(TrainError::Divergence {
            phase: phase.name().into(),
            iteration,
            loss,
        });
    }
    Ok(())
}

/// Full-batch Adam for `adam_epochs`, then BFGS until its stopping rule.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let polygons = dataset_polygons_fitting(&config.dataset_spec(), &build_basis(config)?)?;
    train_on_polygons(config, &polygons)
}

/// As [`train`], with an explicit training set instead of randomly sampled polygons.
pub fn train_on_polygons(config: &TrainConfig, polygons: &[Polygon]) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if let Some(p) = polygons.iter().find(|p| p.num_vertices() != config.nv) {
        return Err(TrainError::Config(format!(
            "training polygon with {} vertices for an nv = {} model",
            p.num_vertices(),
            config.nv
        )));
    }
    let basis = build_basis(config)?;
    let samples = samples_for_polygons(polygons, config.points_per_edge, &basis)?;
    let batch = PreparedBatch::new(&samples, &basis);
    drop(samples);
    let points = batch.num_points() as f64;
    info!(
        "training nv={} ell={}: {} samples, {} control points",
        config.nv,
        config.ell,
        batch.samples.len(),
        points
    );

    let mut net = init_glorot(&config.layer_sizes(), config.init_seed)?;
    let mut params = net.params().to_vec();
    let mut curve = Vec::new();
    let mut adam = Adam::new(config.adam, params.len());
    for epoch in 0..config.adam_epochs {
        let (terms, grad) = loss(&net, &batch).map_err(|e| match e {
            TrainError::NonFinite(_) => TrainError::Divergence {
                phase: "adam".into(),
                iteration: epoch,
                loss: f64::NAN,
            },
            other => other,
        })?;
        let l = terms.total();
        check_divergence(Phase::Adam, epoch, l)?;
        curve.push(CurvePoint {
            phase: Phase::Adam,
            iteration: epoch,
            loss: l,
        });
        if epoch % 500 == 0 {
            debug!("adam epoch {epoch}: loss {l:e}");
        }
        adam.step(&mut params, &grad)?;
        net.set_params(&params)?;
    }

    let (terms, _) = loss(&net, &batch)?;
    check_divergence(Phase::Adam, config.adam_epochs, terms.total())?;
    info!("after adam: loss {:e}", terms.total());

    let mut failure: Option<TrainError> = None;
    let mut work = net.clone();
    let report = bfgs_minimize(
        |x, g| {
            if work.set_params(x).is_err() {
                return f64::NAN;
            }
            match loss(&work, &batch) {
                Ok((t, grad)) => {
                    g.copy_from_slice(&grad);
                    t.total()
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    g.iter_mut().for_each(|v| *v = f64::NAN);
                    f64::NAN
                }
            }
        },
        &params,
        &config.bfgs,
    );
    let report = match report {
        Ok(r) => r,
        Err(NetError::NonFinite { iteration, .. }) => {
            return Err(TrainError::Divergence {
                phase: "bfgs".into(),
                iteration,
                loss: f64::NAN,
            });
        }
        Err(e) => return Err(failure.unwrap_or(TrainError::Net(e))),
    };
    for (i, &l) in report.history.iter().enumerate() {
        curve.push(CurvePoint {
            phase: Phase::Bfgs,
            iteration: i + 1,
            loss: l,
        });
    }
    check_divergence(Phase::Bfgs, report.iterations, report.f)?;
    net.set_params(&report.x)?;
    info!(
        "bfgs stopped ({:?}) after {} iterations: loss {:e}, per point {:e}",
        report.reason,
        report.iterations,
        report.f,
        report.f / points
    );

    let validation = if config.validation_count > 0 {
        let held_out = samples_for_polygons(
            &dataset_polygons_fitting(&config.validation_spec(), &basis)?,
            config.points_per_edge,
            &basis,
        )?;
        evaluate_batch(&net, &PreparedBatch::new(&held_out, &basis))?
    } else {
        ValidationReport::default()
    };
    info!(
        "validation: max value error {:e}, mean {:e}, max derivative error {:e}",
        validation.max_value_error, validation.mean_value_error, validation.max_derivative_error
    );

    let metadata = TrainingMetadata {
        dataset_seed: config.dataset_seed,
        init_seed: config.init_seed,
        validation_seed: config.validation_seed,
        sample_count: polygons.len(),
        points_per_edge: config.points_per_edge,
        rho: config.rho,
        sampler: config.sampler,
        adam_epochs: config.adam_epochs,
        adam: config.adam,
        bfgs: config.bfgs,
        bfgs_iterations: report.iterations,
        bfgs_stop: Some(report.reason),
        final_loss: report.f,
        final_loss_per_point: report.f / points,
        validation_max_value_error: validation.max_value_error,
        validation_mean_value_error: validation.mean_value_error,
        validation_max_derivative_error: validation.max_derivative_error,
    };
    let model = NavemModel::new(config.nv, net, basis, metadata)?;
    Ok(TrainOutcome {
        model,
        curve,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn triangle_config() -> TrainConfig {
        TrainConfig {
            nv: 3,
            ell: 1,
            hidden: vec![16, 16],
            sample_count: 10,
            points_per_edge: 6,
            adam_epochs: 500,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            bfgs: BfgsConfig {
                max_iterations: 5000,
                ..BfgsConfig::default()
            },
            validation_count: 5,
            h_ref: 12.0,
            lattice_n: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn targets_form_partition_of_unity() {
        let basis = orthonormalize(build_monomials(1, 6.0).unwrap(), 10).unwrap();
        for polygon in dataset_polygons(&DatasetSpec {
            nv: 5,
            sample_count: 4,
            points_per_edge: 7,
            seed: 5,
            rho: 0.1,
            sampler: PolygonSampler::Star,
        })
        .unwrap()
        {
            let samples = polygon_samples(&polygon, 0, 7, &basis).unwrap();
            let frames = crate::geometry::VertexFrame::for_all_vertices(&polygon).unwrap();
            for cp in control_points(&polygon, 7) {
                let mut sum = 0.0;
                for (j, frame) in frames.iter().enumerate() {
                    let local = frame.map.apply(cp.point);
                    let n = polygon.num_vertices();
                    let edge = (cp.edge + n - j) % n;
                    sum += exact_trace(&samples[j].element, local, Some(edge)).unwrap().0;
                }
                assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
            }
        }
    }

    #[test]
    fn triangle_model_reaches_representable_fit() {
        let cfg = triangle_config();
        let out = train(&cfg).unwrap();
        let points = (cfg.sample_count * 3 * 3 * cfg.points_per_edge) as f64;
        let per_point = out.model.metadata.final_loss / points;
        assert!(per_point < 1e-8, "loss per point {per_point:e}");
        assert!(out.curve.first().unwrap().loss > out.model.metadata.final_loss);
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let cfg = TrainConfig {
            adam_epochs: 20,
            bfgs: BfgsConfig {
                max_iterations: 20,
                ..BfgsConfig::default()
            },
            ..triangle_config()
        };
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        let json = a.model.to_json();
        assert_eq!(json, b.model.to_json());
        assert_eq!(curve_csv(&a.curve), curve_csv(&b.curve));
        let loaded = NavemModel::from_json(&json).unwrap();
        assert_eq!(loaded, a.model);
        let z = [0.3, -0.2, -0.5, 0.4];
        let p1 = a.model.predict_coefficients(&z).unwrap();
        let p2 = loaded.predict_coefficients(&z).unwrap();
        assert!(p1.iter().zip(&p2).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn model_json_is_validated() {
        let cfg = TrainConfig {
            adam_epochs: 1,
            bfgs: BfgsConfig {
                max_iterations: 1,
                ..BfgsConfig::default()
            },
            validation_count: 0,
            ..triangle_config()
        };
        let json = train(&cfg).unwrap().model.to_json();
        assert!(matches!(NavemModel::from_json("{}"), Err(TrainError::Model(_))));
        let wrong = json.replace("navem-model v1", "navem-model v9");
        assert!(matches!(NavemModel::from_json(&wrong), Err(TrainError::Model(_))));
        let wrong_nv = json.replacen("\"nv\": 3", "\"nv\": 4", 1);
        assert!(matches!(NavemModel::from_json(&wrong_nv), Err(TrainError::Model(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            TrainConfig { nv: 2, ..TrainConfig::default() },
            TrainConfig { ell: 0, ..TrainConfig::default() },
            TrainConfig { points_per_edge: 1, ..TrainConfig::default() },
            TrainConfig { sample_count: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train(&cfg), Err(TrainError::Config(_))));
        }
        assert_eq!(TrainConfig::default().layer_sizes(), vec![6, 30, 30, 30, 11]);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e3,
                ..AdamConfig::default()
            },
            adam_epochs: 50,
            ..triangle_config()
        };
        match train(&cfg) {
            Err(TrainError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
        let _ = Point2::ORIGIN;
    }
}
