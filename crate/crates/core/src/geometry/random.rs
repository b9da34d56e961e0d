use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, MeshAssumptionParams, Point2, Polygon, Result};

const MAX_ATTEMPTS: usize = 10_000;
const RADIUS_RANGE: (f64, f64) = (0.35, 0.5);
/// Smallest ratio of the smaller to the larger stretch of the distorted regular polygon.
const MIN_ASPECT: f64 = 0.2;
/// Largest per-coordinate vertex jitter, relative to the side of the undistorted polygon.
const JITTER: f64 = 0.15;

/// Shape distribution used for training and validation polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolygonSampler {
    /// Sorted random angles and radii about the origin ([`random_polygon`]).
    Star,
    /// Jittered regular polygon under a random stretch ([`random_distorted_regular_polygon`]).
    DistortedRegular,
}

impl PolygonSampler {
    pub fn name(self) -> &'static str {
        match self {
            PolygonSampler::Star => "star",
            PolygonSampler::DistortedRegular => "distorted-regular",
        }
    }
}

impl fmt::Display for PolygonSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolygonSampler {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "star" => Ok(PolygonSampler::Star),
            "distorted-regular" => Ok(PolygonSampler::DistortedRegular),
            other => Err(format!("unknown polygon sampler '{other}' (expected star or distorted-regular)")),
        }
    }
}

pub fn sample_polygon(sampler: PolygonSampler, nv: usize, params: MeshAssumptionParams, seed: u64) -> Result<Polygon> {
    match sampler {
        PolygonSampler::Star => random_polygon(nv, params, seed),
        PolygonSampler::DistortedRegular => random_distorted_regular_polygon(nv, params, seed),
    }
}

/// Regular `nv`-gon with unit side, each vertex jittered by up to ±δ per coordinate,
/// then stretched by `diag(1, a) · R(φ)`. `a` is log-uniform in [0.2, 1], φ uniform in
/// [0, 2π/nv) and δ = 0.15·u² with u uniform in [0, 1], so near-parallelograms are common.
/// Candidates are rejected until the mesh assumptions hold.
///
/// Covers the parallelograms and mildly curved quadrilaterals that appear in smoothly
/// distorted structured meshes.
pub fn random_distorted_regular_polygon(nv: usize, params: MeshAssumptionParams, seed: u64) -> Result<Polygon> {
    if nv < 3 {
        return Err(GeometryError::TooFewVertices(nv));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let circumradius = 0.5 / (PI / nv as f64).sin();
    let offset = PI / nv as f64 - FRAC_PI_2;
    let mut failures: BTreeMap<&'static str, usize> = BTreeMap::new();
    for _ in 0..MAX_ATTEMPTS {
        let aspect = MIN_ASPECT.powf(rng.random::<f64>());
        let phi = rng.random_range(0.0..TAU / nv as f64);
        let jitter = JITTER * rng.random::<f64>().powi(2);
        let (c, s) = (phi.cos(), phi.sin());
        let vertices = (0..nv)
            .map(|k| {
                let t = offset + TAU * k as f64 / nv as f64;
                let x = circumradius * t.cos() + rng.random_range(-jitter..=jitter);
                let y = circumradius * t.sin() + rng.random_range(-jitter..=jitter);
                Point2::new(c * x - s * y, aspect * (s * x + c * y))
            })
            .collect();
        let polygon = match Polygon::new(vertices) {
            Ok(p) => p,
            Err(_) => {
                *failures.entry("simple counter-clockwise polygon").or_default() += 1;
                continue;
            }
        };
        match polygon.check_mesh_assumptions(params) {
            Ok(()) => return Ok(polygon),
            Err(which) => *failures.entry(which).or_default() += 1,
        }
    }
    Err(generation_failure(failures))
}

fn generation_failure(failures: BTreeMap<&'static str, usize>) -> GeometryError {
    let constraint = failures
        .into_iter()
        .max_by_key(|&(_, count)| count)
        .map(|(name, _)| name.to_string())
        .unwrap_or_default();
    GeometryError::GenerationFailure {
        attempts: MAX_ATTEMPTS,
        constraint,
    }
}

/// Random star-shaped polygon satisfying the mesh assumptions with constant `params.rho`.
///
/// Angles are sorted uniform draws with a minimum gap of 2πρ, radii are uniform in
/// [0.35, 0.5]; candidates are rejected until both assumptions hold.
pub fn random_polygon(nv: usize, params: MeshAssumptionParams, seed: u64) -> Result<Polygon> {
    if nv < 3 {
        return Err(GeometryError::TooFewVertices(nv));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_gap = TAU * params.rho;
    let mut failures: BTreeMap<&'static str, usize> = BTreeMap::new();
    for _ in 0..MAX_ATTEMPTS {
        let mut angles: Vec<f64> = (0..nv).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let wrap_gap = angles[0] + TAU - angles[nv - 1];
        let gap_ok = angles.windows(2).all(|w| w[1] - w[0] >= min_gap) && wrap_gap >= min_gap;
        let radii: Vec<f64> = (0..nv).map(|_| rng.random_range(RADIUS_RANGE.0..RADIUS_RANGE.1)).collect();
        if !gap_ok {
            *failures.entry("minimum angular gap").or_default() += 1;
            continue;
        }
        let vertices = angles
            .iter()
            .zip(&radii)
            .map(|(&a, &r)| Point2::new(r * a.cos(), r * a.sin()))
            .collect();
        let polygon = match Polygon::new(vertices) {
            Ok(p) => p,
            Err(_) => {
                *failures.entry("simple counter-clockwise polygon").or_default() += 1;
                continue;
            }
        };
        match polygon.check_mesh_assumptions(params) {
            Ok(()) => return Ok(polygon),
            Err(which) => *failures.entry(which).or_default() += 1,
        }
    }
    Err(generation_failure(failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrilaterals_satisfy_assumptions_and_are_distinct() {
        let params = MeshAssumptionParams { rho: 0.1 };
        let polys: Vec<Polygon> = (0..100).map(|s| random_polygon(4, params, s).unwrap()).collect();
        for p in &polys {
            assert_eq!(p.num_vertices(), 4);
            assert!(p.check_mesh_assumptions(params).is_ok());
        }
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                assert_ne!(polys[i].vertices(), polys[j].vertices());
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = MeshAssumptionParams::default();
        assert_eq!(random_polygon(5, p, 42).unwrap(), random_polygon(5, p, 42).unwrap());
    }

    #[test]
    fn triangles_are_star_shaped() {
        for s in 0..50 {
            let t = random_polygon(3, MeshAssumptionParams::default(), s).unwrap();
            assert!(t.kernel_inscribed_disc().is_some());
        }
    }

    #[test]
    fn distorted_regular_polygons_cover_stretched_quadrilaterals() {
        let params = MeshAssumptionParams { rho: 0.1 };
        let mut min_ratio = f64::MAX;
        for s in 0..200 {
            let p = random_distorted_regular_polygon(4, params, s).unwrap();
            assert!(p.check_mesh_assumptions(params).is_ok());
            let (ixx, ixy, iyy) = p.central_second_moments();
            let mean = 0.5 * (ixx + iyy);
            let r = (0.25 * (ixx - iyy).powi(2) + ixy * ixy).sqrt();
            min_ratio = min_ratio.min(((mean - r) / (mean + r)).sqrt());
        }
        // Inertia axes ratio reaches well below 1/2: strongly stretched shapes occur.
        assert!(min_ratio < 0.4, "{min_ratio}");
        for nv in [3, 5, 6] {
            assert_eq!(random_distorted_regular_polygon(nv, params, 1).unwrap().num_vertices(), nv);
        }
        assert_eq!("distorted-regular".parse::<PolygonSampler>(), Ok(PolygonSampler::DistortedRegular));
    }

    #[test]
    fn impossible_constraint_reports_failure() {
        // A gap of 2π·0.4 cannot fit four vertices.
        let err = random_polygon(4, MeshAssumptionParams { rho: 0.4 }, 1).unwrap_err();
        match err {
            GeometryError::GenerationFailure { constraint, .. } => assert_eq!(constraint, "minimum angular gap"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
