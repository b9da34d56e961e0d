use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::geometry::{sample_polygon, MeshAssumptionParams, Point2, Polygon, PolygonSampler, VertexFrame};
use crate::harmonic_basis::HarmonicBasis;

/// A boundary point of Ẽ_j with the edge it is attributed to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub point: Point2,
    pub edge: usize,
    /// Counter-clockwise unit tangent of `edge`.
    pub tangent: Point2,
}

/// One (vertex, polygon) pair in the canonical frame with its boundary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub polygon_id: usize,
    pub vertex: usize,
    pub input: Vec<f64>,
    /// Ẽ_j, canonical vertex first.
    pub element: Polygon,
    pub control_points: Vec<ControlPoint>,
    pub target_values: Vec<f64>,
    pub target_derivatives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub nv: usize,
    pub sample_count: usize,
    pub points_per_edge: usize,
    pub seed: u64,
    pub rho: f64,
    pub sampler: PolygonSampler,
}

/// Trace of the lowest-order basis function of vertex 0 on ∂E and its derivative along the
/// counter-clockwise tangent. `edge` disambiguates points at vertices.
pub fn exact_trace(element: &Polygon, point: Point2, edge: Option<usize>) -> Result<(f64, f64), TrainError> {
    let n = element.num_vertices();
    let tol = 1e-10 * element.diameter();
    let edge = match edge {
        Some(e) if e < n && element.edges()[e].distance_to(point) <= tol => e,
        Some(e) => {
            return Err(TrainError::Domain(format!("point {point:?} is not on edge {e}")));
        }
        None => element
            .edge_containing(point, tol)
            .ok_or_else(|| TrainError::Domain(format!("point {point:?} is not on the boundary")))?,
    };
    let e = &element.edges()[edge];
    let t = if point == e.end {
        1.0
    } else if point == e.start {
        0.0
    } else {
        ((point - e.start).dot(e.tangent) / e.length).clamp(0.0, 1.0)
    };
    Ok(if edge == 0 {
        (1.0 - t, -1.0 / e.length)
    } else if edge == n - 1 {
        (t, 1.0 / e.length)
    } else {
        (0.0, 0.0)
    })
}

/// Equally spaced control points on every edge, endpoints included once per edge.
pub fn control_points(element: &Polygon, points_per_edge: usize) -> Vec<ControlPoint> {
    let m = points_per_edge.max(2);
    element
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(k, e)| {
            (0..m).map(move |i| ControlPoint {
                point: e.point_at(i as f64 / (m - 1) as f64),
                edge: k,
                tangent: e.tangent,
            })
        })
        .collect()
}

/// All N_v samples of one polygon.
pub fn polygon_samples(
    polygon: &Polygon,
    polygon_id: usize,
    points_per_edge: usize,
    basis: &HarmonicBasis,
) -> Result<Vec<TrainingSample>, TrainError> {
    let frames = VertexFrame::for_all_vertices(polygon)?;
    frames
        .into_iter()
        .enumerate()
        .map(|(vertex, frame)| {
            if !basis.contains(&frame.element) {
                return Err(TrainError::Containment {
                    polygon: polygon_id,
                    vertex,
                    h_ref: basis.h_ref(),
                });
            }
            let cps = control_points(&frame.element, points_per_edge);
            let mut target_values = Vec::with_capacity(cps.len());
            let mut target_derivatives = Vec::with_capacity(cps.len());
            for cp in &cps {
                let (v, d) = exact_trace(&frame.element, cp.point, Some(cp.edge))?;
                target_values.push(v);
                target_derivatives.push(d);
            }
            Ok(TrainingSample {
                polygon_id,
                vertex,
                input: frame.input,
                element: frame.element,
                control_points: cps,
                target_values,
                target_derivatives,
            })
        })
        .collect()
}

/// Random polygons for a dataset; per-polygon seeds are drawn sequentially from `spec.seed`.
pub fn dataset_polygons(spec: &DatasetSpec) -> Result<Vec<Polygon>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = (0..spec.sample_count).map(|_| rng.random()).collect();
    let params = MeshAssumptionParams { rho: spec.rho };
    seeds
        .par_iter()
        .map(|&s| sample_polygon(spec.sampler, spec.nv, params, s).map_err(TrainError::from))
        .collect()
}

/// As [`dataset_polygons`], keeping only polygons whose canonical elements fit in the
/// reference square of `basis`; a rejected polygon is replaced by a redraw from a derived seed.
pub fn dataset_polygons_fitting(spec: &DatasetSpec, basis: &HarmonicBasis) -> Result<Vec<Polygon>, TrainError> {
    const REDRAWS: u64 = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = (0..spec.sample_count).map(|_| rng.random()).collect();
    let params = MeshAssumptionParams { rho: spec.rho };
    seeds
        .par_iter()
        .enumerate()
        .map(|(id, &s)| {
            for k in 0..REDRAWS {
                let p = sample_polygon(spec.sampler, spec.nv, params, s.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15)))?;
                let frames = VertexFrame::for_all_vertices(&p)?;
                if frames.iter().all(|f| basis.contains(&f.element)) {
                    return Ok(p);
                }
            }
            Err(TrainError::Containment {
                polygon: id,
                vertex: 0,
                h_ref: basis.h_ref(),
            })
        })
        .collect()
}

pub fn build_dataset(spec: &DatasetSpec, basis: &HarmonicBasis) -> Result<Vec<TrainingSample>, TrainError> {
    if spec.sample_count == 0 || spec.points_per_edge < 2 {
        return Err(TrainError::Config(
            "dataset needs at least one polygon and two control points per edge".into(),
        ));
    }
    samples_for_polygons(&dataset_polygons(spec)?, spec.points_per_edge, basis)
}

/// Samples for an explicit list of polygons.
pub fn samples_for_polygons(
    polygons: &[Polygon],
    points_per_edge: usize,
    basis: &HarmonicBasis,
) -> Result<Vec<TrainingSample>, TrainError> {
    let per_polygon: Vec<Vec<TrainingSample>> = polygons
        .par_iter()
        .enumerate()
        .map(|(id, p)| polygon_samples(p, id, points_per_edge, basis))
        .collect::<Result<_, _>>()?;
    Ok(per_polygon.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic_basis::{build_monomials, orthonormalize};

    fn basis() -> HarmonicBasis {
        orthonormalize(build_monomials(2, 6.0).unwrap(), 20).unwrap()
    }

    fn quad() -> Polygon {
        Polygon::new(vec![
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(-1.0, 0.0),
            Point2::new(0.0, -1.0),
        ])
        .unwrap()
    }

    #[test]
    fn trace_values() {
        let q = quad();
        let mid = Point2::new(0.5, 0.5);
        let (v, d) = exact_trace(&q, mid, None).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!((d + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(exact_trace(&q, Point2::new(-0.5, 0.5), None).unwrap(), (0.0, 0.0));
        let (v, d) = exact_trace(&q, Point2::new(1.0, 0.0), Some(3)).unwrap();
        assert_eq!(v, 1.0);
        assert!(d > 0.0);
        assert!(matches!(exact_trace(&q, Point2::new(0.1, 0.1), None), Err(TrainError::Domain(_))));
    }

    #[test]
    fn dataset_shape() {
        let spec = DatasetSpec {
            nv: 4,
            sample_count: 10,
            points_per_edge: 20,
            seed: 3,
            rho: 0.1,
            sampler: PolygonSampler::Star,
        };
        let data = build_dataset(&spec, &basis()).unwrap();
        assert_eq!(data.len(), 40);
        for s in &data {
            assert_eq!(s.input.len(), 6);
            assert_eq!(s.control_points.len(), 80);
            // Kronecker property at the vertices (first point of each edge).
            for (k, cp) in s.control_points.iter().enumerate().step_by(20) {
                let expected = if cp.edge == 0 { 1.0 } else { 0.0 };
                assert_eq!(s.target_values[k], expected);
            }
            for cp in &s.control_points {
                assert!(s.element.edges()[cp.edge].distance_to(cp.point) < 1e-12);
            }
        }
        assert_eq!(build_dataset(&spec, &basis()).unwrap(), data);
    }

    #[test]
    fn small_reference_square_is_rejected() {
        let tiny = orthonormalize(build_monomials(2, 1.0).unwrap(), 20).unwrap();
        let spec = DatasetSpec {
            nv: 4,
            sample_count: 3,
            points_per_edge: 5,
            seed: 1,
            rho: 0.1,
            sampler: PolygonSampler::Star,
        };
        assert!(matches!(build_dataset(&spec, &tiny), Err(TrainError::Containment { .. })));
        assert!(matches!(dataset_polygons_fitting(&spec, &tiny), Err(TrainError::Containment { .. })));
    }
}
