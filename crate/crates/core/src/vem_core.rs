//! Lowest-order virtual elements for the Poisson problem.
//!
//! Local quantities are expressed in the scaled monomials
//! `{1, (x − x_c)/h_E, (y − y_c)/h_E}` centred at the element centroid, so the mean of
//! a projected function over E is its constant coefficient.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{quadrature_on_polygon, GeometryError, Point2, Polygon, PolygonalMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("degenerate element: {0}")]
    Degenerate(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Π∇₁ data and local matrices of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementProjection {
    pub element: usize,
    pub centroid: Point2,
    pub h: f64,
    /// 3 × N_v: column i holds the monomial coefficients of Π∇₁φ_i.
    pub pi_nabla: DMatrix<f64>,
    /// Π⁰₀φ_i, taken as the mean of Π∇₁φ_i over E.
    pub pi_zero: Vec<f64>,
    /// Π∇₁ as an operator on dof vectors (N_v × N_v).
    pub dof_projector: DMatrix<f64>,
    pub consistency: DMatrix<f64>,
    pub stabilization: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl ElementProjection {
    /// Value of Π∇₁v at `p` for local dofs `v`.
    pub fn projected_value(&self, dofs: &[f64], p: Point2) -> f64 {
        let c = self.projected_coefficients(dofs);
        c[0] + c[1] * (p.x - self.centroid.x) / self.h + c[2] * (p.y - self.centroid.y) / self.h
    }

    /// Constant gradient of Π∇₁v.
    pub fn projected_gradient(&self, dofs: &[f64]) -> Point2 {
        let c = self.projected_coefficients(dofs);
        Point2::new(c[1] / self.h, c[2] / self.h)
    }

    pub fn projected_coefficients(&self, dofs: &[f64]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate() {
            *ca = (0..dofs.len()).map(|i| self.pi_nabla[(a, i)] * dofs[i]).sum();
        }
        c
    }
}

fn monomial(p: Point2, c: Point2, h: f64) -> [f64; 3] {
    [1.0, (p.x - c.x) / h, (p.y - c.y) / h]
}

/// Gradient projection of the local hat functions.
///
/// `(∇p, ∇Π∇₁φ_i)_E = ∫_∂E φ_i ∇p·n` is exact because φ_i is linear on each edge; the
/// constant is fixed by `∫_∂E Π∇₁φ_i = ∫_∂E φ_i`.
pub fn project_nabla(element: &Polygon) -> Result<(DMatrix<f64>, Point2, f64), VemError> {
    let n = element.num_vertices();
    let c = element.centroid();
    let h = element.diameter();
    let area = element.area();
    if !(area > 0.0 && h > 0.0) {
        return Err(VemError::Degenerate(format!("area {area:e}, diameter {h:e}")));
    }
    let edges = element.edges();
    let mut g = DMatrix::zeros(3, 3);
    let mut b = DMatrix::zeros(3, n);
    for e in edges {
        let (ms, me) = (monomial(e.start, c, h), monomial(e.end, c, h));
        for a in 0..3 {
            g[(0, a)] += 0.5 * e.length * (ms[a] + me[a]);
        }
    }
    g[(1, 1)] = area / (h * h);
    g[(2, 2)] = area / (h * h);
    for i in 0..n {
        let prev = &edges[(i + n - 1) % n];
        let next = &edges[i];
        b[(0, i)] = 0.5 * (prev.length + next.length);
        let flux = 0.5 * (prev.length * prev.normal + next.length * next.normal);
        b[(1, i)] = flux.x / h;
        b[(2, i)] = flux.y / h;
    }
    let pi = g
        .lu()
        .solve(&b)
        .ok_or_else(|| VemError::Degenerate("projection matrix is singular".into()))?;
    Ok((pi, c, h))
}

/// Projector, consistency and dofi-dofi stabilisation matrices of element `id`.
pub fn local_matrices(id: usize, element: &Polygon) -> Result<ElementProjection, VemError> {
    let n = element.num_vertices();
    let (pi_nabla, c, h) = project_nabla(element)?;
    let area = element.area();
    let mut d = DMatrix::zeros(n, 3);
    for (i, &v) in element.vertices().iter().enumerate() {
        let m = monomial(v, c, h);
        for a in 0..3 {
            d[(i, a)] = m[a];
        }
    }
    let dof_projector = &d * &pi_nabla;
    let mut g_grad = DMatrix::zeros(3, 3);
    g_grad[(1, 1)] = area / (h * h);
    g_grad[(2, 2)] = area / (h * h);
    let consistency = pi_nabla.transpose() * &g_grad * &pi_nabla;
    let defect = DMatrix::identity(n, n) - &dof_projector;
    let stabilization = defect.transpose() * &defect;
    let stiffness = &consistency + &stabilization;
    let pi_zero = (0..n).map(|i| pi_nabla[(0, i)]).collect();
    Ok(ElementProjection {
        element: id,
        centroid: c,
        h,
        pi_nabla,
        pi_zero,
        dof_projector,
        consistency,
        stabilization,
        stiffness,
    })
}

/// Text dump of an element's local matrices.
pub fn dump_local(proj: &ElementProjection) -> String {
    let mut s = format!(
        "element {}\ncentroid {:?} {:?}\ndiameter {:?}\n",
        proj.element, proj.centroid.x, proj.centroid.y, proj.h
    );
    let mut block = |name: &str, m: &DMatrix<f64>| {
        s.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    };
    block("pi_nabla", &proj.pi_nabla);
    block("consistency", &proj.consistency);
    block("stabilization", &proj.stabilization);
    block("stiffness", &proj.stiffness);
    s
}

/// Dense linear solve with Dirichlet rows eliminated.
///
/// `fixed[i]` holds the prescribed value of boundary dof i. Symmetric systems use a
/// Cholesky factorisation, others LU with partial pivoting.
pub fn solve_with_dirichlet(
    matrix: &DMatrix<f64>,
    rhs: &[f64],
    fixed: &[Option<f64>],
    symmetric: bool,
) -> Result<Vec<f64>, VemError> {
    let n = rhs.len();
    if matrix.nrows() != n || matrix.ncols() != n || fixed.len() != n {
        return Err(VemError::Input("system dimensions disagree".into()));
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if free.is_empty() {
        return Ok(x);
    }
    let m = free.len();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for (r, &i) in free.iter().enumerate() {
        let mut bi = rhs[i];
        for j in 0..n {
            if let Some(g) = fixed[j] {
                bi -= matrix[(i, j)] * g;
            }
        }
        b[r] = bi;
        for (c, &j) in free.iter().enumerate() {
            a[(r, c)] = matrix[(i, j)];
        }
    }
    let sol = if symmetric {
        a.clone()
            .cholesky()
            .map(|ch| ch.solve(&b))
            .ok_or_else(|| VemError::Singular("Cholesky factorisation failed; matrix not positive definite".into()))?
    } else {
        a.clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| VemError::Singular(format!("LU factorisation of {m}×{m} system failed")))?
    };
    let residual = (&a * &sol - &b).amax();
    let scale = b.amax();
    let rel = if scale > 0.0 { residual / scale } else { residual };
    if !(rel < 1e-10) {
        return Err(VemError::Singular(format!("relative residual {rel:e} exceeds 1e-10")));
    }
    for (r, &i) in free.iter().enumerate() {
        x[i] = sol[r];
    }
    Ok(x)
}

/// Quadrature degree used for load vectors and error integrals.
pub const VEM_QUAD_DEGREE: usize = 8;

/// Solves −Δu = f with u = g_D on boundary vertices.
pub fn solve_poisson_vem<F, G>(mesh: &PolygonalMesh, f: F, g_d: G) -> Result<(Vec<f64>, Vec<ElementProjection>), VemError>
where
    F: Fn(Point2) -> f64,
    G: Fn(Point2) -> f64,
{
    let nv = mesh.num_vertices();
    let locals = mesh
        .polygons()
        .iter()
        .enumerate()
        .map(|(k, p)| local_matrices(k, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut k = DMatrix::zeros(nv, nv);
    let mut rhs = vec![0.0; nv];
    for ((el, poly), loc) in mesh.elements().iter().zip(mesh.polygons()).zip(&locals) {
        let f_int: f64 = quadrature_on_polygon(poly, VEM_QUAD_DEGREE)?
            .iter()
            .map(|q| q.weight * f(q.point))
            .sum();
        for (a, &i) in el.iter().enumerate() {
            rhs[i] += f_int * loc.pi_zero[a];
            for (b, &j) in el.iter().enumerate() {
                k[(i, j)] += loc.stiffness[(a, b)];
            }
        }
    }
    let fixed: Vec<Option<f64>> = (0..nv)
        .map(|i| mesh.is_boundary(i).then(|| g_d(mesh.vertices()[i])))
        .collect();
    let u = solve_with_dirichlet(&k, &rhs, &fixed, true)?;
    Ok((u, locals))
}

/// (err₂, err₁) of Π∇₁u_h against the exact solution.
pub fn vem_errors<U, GU>(
    mesh: &PolygonalMesh,
    locals: &[ElementProjection],
    dofs: &[f64],
    u_exact: U,
    grad_exact: GU,
) -> Result<(f64, f64), VemError>
where
    U: Fn(Point2) -> f64,
    GU: Fn(Point2) -> Point2,
{
    if dofs.len() != mesh.num_vertices() || locals.len() != mesh.num_elements() {
        return Err(VemError::Input("dof vector or projections do not match the mesh".into()));
    }
    let (mut e2, mut e1) = (0.0, 0.0);
    for ((el, poly), loc) in mesh.elements().iter().zip(mesh.polygons()).zip(locals) {
        let local: Vec<f64> = el.iter().map(|&i| dofs[i]).collect();
        let grad = loc.projected_gradient(&local);
        for q in quadrature_on_polygon(poly, VEM_QUAD_DEGREE)? {
            let du = u_exact(q.point) - loc.projected_value(&local, q.point);
            let dg = grad_exact(q.point) - grad;
            e2 += q.weight * du * du;
            e1 += q.weight * dg.dot(dg);
        }
    }
    Ok((e2.sqrt(), e1.sqrt()))
}

/// Least-squares slope of log(err) against log(h).
pub fn fit_rate(h: &[f64], err: &[f64]) -> Option<f64> {
    if h.len() != err.len() || h.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}
