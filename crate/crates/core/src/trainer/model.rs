use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::geometry::PolygonSampler;
use crate::harmonic_basis::HarmonicBasis;
use crate::neural_net::{Activation, AdamConfig, BfgsConfig, Mlp, StopReason};

pub const MODEL_FORMAT: &str = "navem-model v1";

/// Provenance recorded alongside the trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset_seed: u64,
    pub init_seed: u64,
    pub validation_seed: u64,
    pub sample_count: usize,
    pub points_per_edge: usize,
    pub rho: f64,
    pub sampler: PolygonSampler,
    pub adam_epochs: usize,
    pub adam: AdamConfig,
    pub bfgs: BfgsConfig,
    pub bfgs_iterations: usize,
    pub bfgs_stop: Option<StopReason>,
    pub final_loss: f64,
    pub final_loss_per_point: f64,
    pub validation_max_value_error: f64,
    pub validation_mean_value_error: f64,
    pub validation_max_derivative_error: f64,
}

/// Trained network for polygons with `nv` vertices, bundled with its harmonic basis.
#[derive(Debug, Clone, PartialEq)]
pub struct NavemModel {
    pub nv: usize,
    pub ell: usize,
    pub network: Mlp,
    pub basis: HarmonicBasis,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    layer_sizes: Vec<usize>,
    activation: Activation,
    /// Per layer: row-major weights then biases.
    parameters: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    degree: usize,
    reference_diameter: f64,
    lattice_n: usize,
    /// Row-major change-of-basis matrix from scaled harmonic monomials.
    change_of_basis: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    nv: usize,
    ell: usize,
    network: NetworkFile,
    basis: BasisFile,
    metadata: TrainingMetadata,
}

impl NavemModel {
    pub fn new(nv: usize, network: Mlp, basis: HarmonicBasis, metadata: TrainingMetadata) -> Result<Self, TrainError> {
        let ell = basis.degree();
        let model = Self {
            nv,
            ell,
            network,
            basis,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.nv < 3 {
            return Err(TrainError::Model(format!("nv must be >= 3, got {}", self.nv)));
        }
        if self.network.input_size() != 2 * (self.nv - 1) {
            return Err(TrainError::Model(format!(
                "network input {} does not match 2(nv-1) = {}",
                self.network.input_size(),
                2 * (self.nv - 1)
            )));
        }
        if self.basis.degree() != self.ell || self.network.output_size() != 2 * self.ell + 1 {
            return Err(TrainError::Model(format!(
                "network output {} does not match 2ℓ+1 = {}",
                self.network.output_size(),
                2 * self.ell + 1
            )));
        }
        Ok(())
    }

    /// Basis coefficients predicted for an encoded (vertex, element) pair.
    pub fn predict_coefficients(&self, input: &[f64]) -> Result<Vec<f64>, TrainError> {
        Ok(self.network.predict(input)?)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            nv: self.nv,
            ell: self.ell,
            network: NetworkFile {
                layer_sizes: self.network.sizes().to_vec(),
                activation: self.network.activation(),
                parameters: self.network.params().to_vec(),
            },
            basis: BasisFile {
                degree: self.basis.degree(),
                reference_diameter: self.basis.h_ref(),
                lattice_n: self.basis.lattice_n(),
                change_of_basis: self.basis.change_of_basis().to_vec(),
            },
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| TrainError::Model(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(TrainError::Model(format!(
                "unsupported format '{}', expected '{MODEL_FORMAT}'",
                file.format
            )));
        }
        let network = Mlp::from_parts(file.network.layer_sizes, file.network.activation, file.network.parameters)?;
        let basis = HarmonicBasis::from_parts(
            file.basis.degree,
            file.basis.reference_diameter,
            file.basis.lattice_n,
            file.basis.change_of_basis,
        )?;
        if basis.degree() != file.ell {
            return Err(TrainError::Model("basis degree differs from ell".into()));
        }
        Self::new(file.nv, network, basis, file.metadata)
    }
}
