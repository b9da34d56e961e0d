//! Online phase: network-predicted basis functions per element, direct assembly of the
//! advection-diffusion-reaction system, Dirichlet solve and error evaluation.

mod export;
mod problems;

pub use export::{error_report_csv, sampled_field_csv, solution_csv, ErrorRow};
pub use problems::{AdrCoefficients, Affine, AnisotropicAdr, ExactSolution, Laplacian, PolySineSolution, Problem, SineProduct};

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{quadrature_on_polygon, GeometryError, Point2, Polygon, PolygonalMesh, SimilarityMap, VertexFrame};
use crate::harmonic_basis::HarmonicPoly;
use crate::trainer::{NavemModel, TrainError};
use crate::vem_core::{solve_with_dirichlet, VemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavemError {
    #[error("element {element} has {found} vertices but the model was trained for {expected}")]
    ModelMismatch { element: usize, found: usize, expected: usize },
    #[error("element {element}, vertex {vertex}: mapped element leaves the reference square of diameter {h_ref}")]
    Containment { element: usize, vertex: usize, h_ref: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] TrainError),
    #[error(transparent)]
    Solver(#[from] VemError),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Quadrature degree for assembly and errors (2ℓ + 2 for ℓ = 5).
pub const DEFAULT_QUAD_DEGREE: usize = 12;

/// Predicted basis functions of one element in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasisEval {
    pub element: usize,
    /// Network output per local vertex.
    pub coefficients: Vec<Vec<f64>>,
    /// Per local vertex, the similarity taking E to its canonical frame.
    pub maps: Vec<SimilarityMap>,
    /// φ̂_j re-expanded about the element centroid.
    pub polys: Vec<HarmonicPoly>,
}

impl ElementBasisEval {
    pub fn num_vertices(&self) -> usize {
        self.polys.len()
    }

    pub fn value(&self, j: usize, p: Point2) -> f64 {
        self.polys[j].value(p)
    }

    pub fn gradient(&self, j: usize, p: Point2) -> Point2 {
        self.polys[j].gradient(p)
    }

    pub fn values_and_gradients(&self, p: Point2) -> (Vec<f64>, Vec<Point2>) {
        self.polys.iter().map(|q| q.value_and_gradient(p)).unzip()
    }

    /// Σ_j u_j φ̂_j(p) and its gradient.
    pub fn combine(&self, dofs: &[f64], p: Point2) -> (f64, Point2) {
        let mut v = 0.0;
        let mut g = Point2::ORIGIN;
        for (q, &u) in self.polys.iter().zip(dofs) {
            let (qv, qg) = q.value_and_gradient(p);
            v += u * qv;
            g = g + u * qg;
        }
        (v, g)
    }
}

/// One network pass per vertex of `element`.
pub fn predict_element_basis(id: usize, element: &Polygon, model: &NavemModel) -> Result<ElementBasisEval, NavemError> {
    if element.num_vertices() != model.nv {
        return Err(NavemError::ModelMismatch {
            element: id,
            found: element.num_vertices(),
            expected: model.nv,
        });
    }
    let frames = VertexFrame::for_all_vertices(element)?;
    let (c, h) = (element.centroid(), element.diameter());
    let mut coefficients = Vec::with_capacity(frames.len());
    let mut maps = Vec::with_capacity(frames.len());
    let mut polys = Vec::with_capacity(frames.len());
    for (j, frame) in frames.into_iter().enumerate() {
        if !model.basis.contains(&frame.element) {
            return Err(NavemError::Containment {
                element: id,
                vertex: j,
                h_ref: model.basis.h_ref(),
            });
        }
        let coeff = model.predict_coefficients(&frame.input)?;
        polys.push(model.basis.combine(&coeff).compose(&frame.map, c, h));
        coefficients.push(coeff);
        maps.push(frame.map);
    }
    Ok(ElementBasisEval {
        element: id,
        coefficients,
        maps,
        polys,
    })
}

/// Basis predictions for every element, in element order.
pub fn predict_mesh_basis(mesh: &PolygonalMesh, model: &NavemModel) -> Result<Vec<ElementBasisEval>, NavemError> {
    mesh.polygons()
        .par_iter()
        .enumerate()
        .map(|(k, p)| predict_element_basis(k, p, model))
        .collect()
}

/// max over quadrature points of |Σ_j φ̂_j − 1|.
pub fn partition_of_unity_defect(element: &Polygon, eval: &ElementBasisEval, degree: usize) -> Result<f64, NavemError> {
    let mut worst = 0.0_f64;
    for q in quadrature_on_polygon(element, degree)? {
        let s: f64 = eval.polys.iter().map(|p| p.value(q.point)).sum();
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// Global matrix and load vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdrSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: Vec<f64>,
    /// Largest relative entry change when the quadrature degree is raised by 2, if checked.
    pub quadrature_drift: Option<f64>,
}

type LocalSystem = (DMatrix<f64>, Vec<f64>);

fn local_system(
    element: &Polygon,
    eval: &ElementBasisEval,
    coefficients: &dyn AdrCoefficients,
    source: &(dyn Fn(Point2) -> f64 + Sync),
    degree: usize,
) -> Result<LocalSystem, NavemError> {
    let n = eval.num_vertices();
    let mut k = DMatrix::zeros(n, n);
    let mut f = vec![0.0; n];
    for q in quadrature_on_polygon(element, degree)? {
        let (phi, grad) = eval.values_and_gradients(q.point);
        let d = coefficients.diffusion(q.point);
        let beta = coefficients.advection(q.point);
        let gamma = coefficients.reaction(q.point);
        let fq = source(q.point);
        for j in 0..n {
            let g = grad[j];
            let dg = Point2::new(d[0][0] * g.x + d[0][1] * g.y, d[1][0] * g.x + d[1][1] * g.y);
            let adv = beta.dot(g);
            for i in 0..n {
                k[(i, j)] += q.weight * (dg.dot(grad[i]) + adv * phi[i] + gamma * phi[j] * phi[i]);
            }
        }
        for i in 0..n {
            f[i] += q.weight * fq * phi[i];
        }
    }
    Ok((k, f))
}

fn assemble_at(
    mesh: &PolygonalMesh,
    bases: &[ElementBasisEval],
    coefficients: &dyn AdrCoefficients,
    source: &(dyn Fn(Point2) -> f64 + Sync),
    degree: usize,
) -> Result<(DMatrix<f64>, Vec<f64>), NavemError> {
    let locals: Vec<LocalSystem> = mesh
        .polygons()
        .par_iter()
        .zip(bases)
        .map(|(p, b)| local_system(p, b, coefficients, source, degree))
        .collect::<Result<_, _>>()?;
    let nv = mesh.num_vertices();
    let mut matrix = DMatrix::zeros(nv, nv);
    let mut rhs = vec![0.0; nv];
    for (el, (k, f)) in mesh.elements().iter().zip(&locals) {
        for (a, &i) in el.iter().enumerate() {
            rhs[i] += f[a];
            for (b, &j) in el.iter().enumerate() {
                matrix[(i, j)] += k[(a, b)];
            }
        }
    }
    Ok((matrix, rhs))
}

/// K[i,j] = Σ_E ∫_E (D∇φ̂_j)·∇φ̂_i + (β·∇φ̂_j)φ̂_i + γφ̂_jφ̂_i and rhs[i] = Σ_E ∫_E f φ̂_i.
///
/// With `self_check`, the system is also assembled at `degree + 2` and a warning is
/// logged if any entry moves by more than 1e-8 relative to the largest entry.
pub fn assemble_adr(
    mesh: &PolygonalMesh,
    bases: &[ElementBasisEval],
    coefficients: &dyn AdrCoefficients,
    source: &(dyn Fn(Point2) -> f64 + Sync),
    degree: usize,
    self_check: bool,
) -> Result<AdrSystem, NavemError> {
    if bases.len() != mesh.num_elements() {
        return Err(NavemError::Input("one basis evaluation per element is required".into()));
    }
    let (matrix, rhs) = assemble_at(mesh, bases, coefficients, source, degree)?;
    let quadrature_drift = if self_check {
        let (m2, r2) = assemble_at(mesh, bases, coefficients, source, degree + 2)?;
        let scale_m = matrix.amax().max(f64::MIN_POSITIVE);
        let scale_r = rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let dm = (&matrix - &m2).amax() / scale_m;
        let dr = rhs.iter().zip(&r2).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs())) / scale_r;
        let drift = dm.max(dr);
        if drift > 1e-8 {
            warn!("quadrature degree {degree} may be too low: raising it by 2 changes entries by {drift:e}");
        }
        Some(drift)
    } else {
        None
    };
    Ok(AdrSystem {
        matrix,
        rhs,
        quadrature_drift,
    })
}

/// Imposes g_D at boundary vertices and solves the remaining nonsymmetric system.
pub fn solve(system: &AdrSystem, mesh: &PolygonalMesh, g_d: &dyn Fn(Point2) -> f64) -> Result<Vec<f64>, NavemError> {
    let fixed: Vec<Option<f64>> = (0..mesh.num_vertices())
        .map(|i| mesh.is_boundary(i).then(|| g_d(mesh.vertices()[i])))
        .collect();
    Ok(solve_with_dirichlet(&system.matrix, &system.rhs, &fixed, false)?)
}

/// (err₂, err₁) of u_h = Σ u_i φ̂_i measured with the predicted functions themselves.
pub fn navem_errors(
    mesh: &PolygonalMesh,
    bases: &[ElementBasisEval],
    dofs: &[f64],
    solution: &dyn ExactSolution,
    degree: usize,
) -> Result<(f64, f64), NavemError> {
    if dofs.len() != mesh.num_vertices() || bases.len() != mesh.num_elements() {
        return Err(NavemError::Input("dof vector or basis list does not match the mesh".into()));
    }
    let parts: Vec<(f64, f64)> = mesh
        .polygons()
        .par_iter()
        .zip(bases)
        .zip(mesh.elements())
        .map(|((poly, eval), el)| {
            let local: Vec<f64> = el.iter().map(|&i| dofs[i]).collect();
            let (mut e2, mut e1) = (0.0, 0.0);
            for q in quadrature_on_polygon(poly, degree)? {
                let (v, g) = eval.combine(&local, q.point);
                let dv = solution.value(q.point) - v;
                let dg = solution.gradient(q.point) - g;
                e2 += q.weight * dv * dv;
                e1 += q.weight * dg.dot(dg);
            }
            Ok((e2, e1))
        })
        .collect::<Result<_, NavemError>>()?;
    let (e2, e1) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok((e2.sqrt(), e1.sqrt()))
}

/// Points sampled per interior edge by [`conformity_defect`].
pub const CONFORMITY_SAMPLES: usize = 10;

/// Largest jump of u_h across interior edges, sampled at equally spaced points.
pub fn conformity_defect(mesh: &PolygonalMesh, bases: &[ElementBasisEval], dofs: &[f64]) -> f64 {
    let local = |k: usize| -> Vec<f64> { mesh.elements()[k].iter().map(|&i| dofs[i]).collect() };
    let mut worst = 0.0_f64;
    for e in mesh.interior_edges() {
        let (pa, pb) = (mesh.vertices()[e.a], mesh.vertices()[e.b]);
        let (ul, ur) = (local(e.left), local(e.right));
        for s in 0..CONFORMITY_SAMPLES {
            let p = pa.lerp(pb, s as f64 / (CONFORMITY_SAMPLES - 1) as f64);
            let jump = bases[e.left].combine(&ul, p).0 - bases[e.right].combine(&ur, p).0;
            worst = worst.max(jump.abs());
        }
    }
    worst
}

/// Summary of one NAVEM solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NavemRun {
    pub dofs: Vec<f64>,
    pub err2: f64,
    pub err1: f64,
    pub conformity_defect: f64,
    pub partition_defect: f64,
    pub quadrature_drift: Option<f64>,
}

/// Predict, assemble, solve and measure on one mesh.
pub fn run_problem(
    mesh: &PolygonalMesh,
    model: &NavemModel,
    problem: &Problem<'_>,
    degree: usize,
    self_check: bool,
) -> Result<NavemRun, NavemError> {
    let bases = predict_mesh_basis(mesh, model)?;
    let source = |p: Point2| problem.source(p);
    let system = assemble_adr(mesh, &bases, problem.coefficients, &source, degree, self_check)?;
    let dofs = solve(&system, mesh, &|p| problem.dirichlet(p))?;
    let (err2, err1) = navem_errors(mesh, &bases, &dofs, problem.solution, degree)?;
    let mut partition_defect = 0.0_f64;
    for (p, b) in mesh.polygons().iter().zip(&bases) {
        partition_defect = partition_defect.max(partition_of_unity_defect(p, b, degree)?);
    }
    Ok(NavemRun {
        conformity_defect: conformity_defect(mesh, &bases, &dofs),
        dofs,
        err2,
        err1,
        partition_defect,
        quadrature_drift: system.quadrature_drift,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;
    use crate::geometry::{build_mesh_family, MeshFamily};
    use crate::neural_net::{AdamConfig, BfgsConfig};
    use crate::trainer::{train_on_polygons, TrainConfig};

    /// n×n squares on the unit square, each split along its rising diagonal.
    fn triangle_mesh(n: usize) -> PolygonalMesh {
        let quads = build_mesh_family(MeshFamily::Cartesian, n).unwrap();
        let mut elements = Vec::new();
        for q in quads.elements() {
            elements.push(vec![q[0], q[1], q[2]]);
            elements.push(vec![q[0], q[2], q[3]]);
        }
        PolygonalMesh::from_elements(quads.vertices().to_vec(), elements).unwrap()
    }

    /// ℓ = 1 model trained on the right isosceles triangle; every element of
    /// `triangle_mesh` is similar to it.
    fn triangle_model() -> &'static NavemModel {
        static MODEL: OnceLock<NavemModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let cfg = TrainConfig {
                nv: 3,
                ell: 1,
                hidden: vec![8],
                points_per_edge: 6,
                adam_epochs: 300,
                adam: AdamConfig {
                    learning_rate: 1e-2,
                    ..AdamConfig::default()
                },
                bfgs: BfgsConfig {
                    max_iterations: 3000,
                    ..BfgsConfig::default()
                },
                validation_count: 0,
                h_ref: 12.0,
                lattice_n: 20,
                ..TrainConfig::default()
            };
            let tri = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)]).unwrap();
            train_on_polygons(&cfg, &[tri]).unwrap().model
        })
    }

    fn p1_stiffness(mesh: &PolygonalMesh) -> DMatrix<f64> {
        let nv = mesh.num_vertices();
        let mut k = DMatrix::zeros(nv, nv);
        for (el, poly) in mesh.elements().iter().zip(mesh.polygons()) {
            let v = poly.vertices();
            let area = poly.area();
            let bc: Vec<(f64, f64)> = (0..3)
                .map(|i| {
                    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                    (v[j].y - v[l].y, v[l].x - v[j].x)
                })
                .collect();
            for a in 0..3 {
                for b in 0..3 {
                    k[(el[a], el[b])] += (bc[a].0 * bc[b].0 + bc[a].1 * bc[b].1) / (4.0 * area);
                }
            }
        }
        k
    }

    #[test]
    fn triangle_basis_is_barycentric() {
        let model = triangle_model();
        let mesh = triangle_mesh(3);
        let bases = predict_mesh_basis(&mesh, model).unwrap();
        for (poly, eval) in mesh.polygons().iter().zip(&bases) {
            let v = poly.vertices();
            for q in quadrature_on_polygon(poly, 3).unwrap() {
                // Barycentric coordinates via sub-triangle areas.
                for j in 0..3 {
                    let (a, b) = (v[(j + 1) % 3], v[(j + 2) % 3]);
                    let lambda = 0.5 * (a - q.point).cross(b - q.point) / poly.area();
                    assert!((eval.value(j, q.point) - lambda).abs() < 1e-6);
                }
            }
            assert!(partition_of_unity_defect(poly, eval, 4).unwrap() < 1e-6);
        }
    }

    #[test]
    fn gradients_match_differences_and_harmonicity_is_exact() {
        let model = triangle_model();
        let tri = Polygon::new(vec![Point2::new(0.2, 0.1), Point2::new(0.7, 0.1), Point2::new(0.7, 0.6)]).unwrap();
        let eval = predict_element_basis(0, &tri, model).unwrap();
        let h = 1e-6;
        let p = Point2::new(0.55, 0.25);
        for j in 0..3 {
            let g = eval.gradient(j, p);
            let fx = (eval.value(j, p + Point2::new(h, 0.0)) - eval.value(j, p - Point2::new(h, 0.0))) / (2.0 * h);
            let fy = (eval.value(j, p + Point2::new(0.0, h)) - eval.value(j, p - Point2::new(0.0, h))) / (2.0 * h);
            let scale = g.norm().max(1e-3);
            assert!((fx - g.x).abs() / scale < 1e-6 && (fy - g.y).abs() / scale < 1e-6);
            assert!(eval.polys[j].laplacian_coefficients().iter().all(|&c| c == 0.0));
            // Chain rule through the stored similarity.
            let map = &eval.maps[j];
            let reference = model.basis.combine(&eval.coefficients[j]);
            let pulled = map.pull_back_gradient(reference.gradient(map.apply(p)));
            assert!((pulled - g).norm() < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn stiffness_equals_linear_fem_on_triangles() {
        let model = triangle_model();
        let mesh = triangle_mesh(4);
        let bases = predict_mesh_basis(&mesh, model).unwrap();
        let sys = assemble_adr(&mesh, &bases, &Laplacian, &|_| 0.0, 4, true).unwrap();
        let diff = (&sys.matrix - p1_stiffness(&mesh)).amax();
        assert!(diff < 1e-6, "max deviation {diff:e}");
        assert!(sys.quadrature_drift.unwrap() < 1e-8);
    }

    #[test]
    fn affine_patch_test_on_triangles() {
        let model = triangle_model();
        let mesh = triangle_mesh(4);
        let sol = Affine([0.3, 1.0, -2.0]);
        let problem = Problem::new(&Laplacian, &sol);
        let run = run_problem(&mesh, model, &problem, 4, false).unwrap();
        for (i, &p) in mesh.vertices().iter().enumerate() {
            assert!((run.dofs[i] - sol.value(p)).abs() < 1e-8);
        }
        assert!(run.err2 < 1e-6 && run.err1 < 1e-5);
        assert!(run.conformity_defect < 1e-6);
    }

    #[test]
    fn assembly_is_linear_in_the_source() {
        let model = triangle_model();
        let mesh = triangle_mesh(2);
        let bases = predict_mesh_basis(&mesh, model).unwrap();
        let f = |p: Point2| 1.0 + p.x * p.y;
        let a = assemble_adr(&mesh, &bases, &AnisotropicAdr, &f, 6, false).unwrap();
        let b = assemble_adr(&mesh, &bases, &AnisotropicAdr, &|p| 3.0 * f(p), 6, false).unwrap();
        assert_eq!(a.matrix, b.matrix);
        for (x, y) in a.rhs.iter().zip(&b.rhs) {
            assert!((3.0 * x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn reaction_only_entries_are_positive() {
        struct Reaction;
        impl AdrCoefficients for Reaction {
            fn diffusion(&self, _: Point2) -> [[f64; 2]; 2] {
                [[1e-9, 0.0], [0.0, 1e-9]]
            }
            fn diffusion_divergence(&self, _: Point2) -> Point2 {
                Point2::ORIGIN
            }
            fn advection(&self, _: Point2) -> Point2 {
                Point2::ORIGIN
            }
            fn reaction(&self, _: Point2) -> f64 {
                1.0
            }
        }
        let mesh = triangle_mesh(2);
        let bases = predict_mesh_basis(&mesh, triangle_model()).unwrap();
        let sys = assemble_adr(&mesh, &bases, &Reaction, &|_| 0.0, 4, false).unwrap();
        for (el, _) in mesh.elements().iter().zip(mesh.polygons()) {
            for &i in el {
                for &j in el {
                    assert!(sys.matrix[(i, j)] > 0.0);
                }
            }
        }
    }

    #[test]
    fn wrong_vertex_count_is_rejected() {
        let mesh = build_mesh_family(MeshFamily::Cartesian, 2).unwrap();
        assert!(matches!(
            predict_mesh_basis(&mesh, triangle_model()),
            Err(NavemError::ModelMismatch { expected: 3, found: 4, .. })
        ));
    }
}
