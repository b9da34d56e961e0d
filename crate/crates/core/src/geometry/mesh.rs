use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{GeometryError, MeshAssumptionParams, Point2, Polygon, Result};

pub const MESH_HEADER: &str = "navem-mesh v1";

/// Amplitude of the sine distortion applied to interior nodes.
const SINE_AMPLITUDE: f64 = 0.1;
/// Shape-regularity constant required of distorted elements.
const DISTORTED_RHO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Cartesian,
    SineDistorted,
}

impl MeshFamily {
    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::Cartesian => "cartesian",
            MeshFamily::SineDistorted => "sine",
        }
    }
}

impl FromStr for MeshFamily {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cartesian" => Ok(MeshFamily::Cartesian),
            "sine" | "sine-distorted" => Ok(MeshFamily::SineDistorted),
            other => Err(format!("unknown mesh family '{other}' (expected cartesian or sine)")),
        }
    }
}

/// Conforming polygonal mesh with vertex boundary markers.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalMesh {
    vertices: Vec<Point2>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    polygons: Vec<Polygon>,
    h: f64,
}

/// Interior edge shared by two elements; `left` traverses it as `a → b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorEdge {
    pub a: usize,
    pub b: usize,
    pub left: usize,
    pub right: usize,
}

impl PolygonalMesh {
    /// Validates elements and conformity, and checks the given boundary flags
    /// against edge incidence.
    pub fn new(vertices: Vec<Point2>, elements: Vec<Vec<usize>>, boundary: Vec<bool>) -> Result<Self> {
        let derived = Self::from_elements(vertices, elements)?;
        if boundary.len() != derived.vertices.len() {
            return Err(GeometryError::Parameter(format!(
                "{} boundary flags for {} vertices",
                boundary.len(),
                derived.vertices.len()
            )));
        }
        if let Some(i) = (0..boundary.len()).find(|&i| boundary[i] != derived.boundary[i]) {
            return Err(GeometryError::Parameter(format!(
                "boundary flag of vertex {i} inconsistent with edge incidence"
            )));
        }
        Ok(derived)
    }

    /// Builds the mesh, deriving boundary flags from edges used by a single element.
    pub fn from_elements(vertices: Vec<Point2>, elements: Vec<Vec<usize>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(GeometryError::Parameter("mesh has no elements".into()));
        }
        let mut polygons = Vec::with_capacity(elements.len());
        let mut used = vec![false; vertices.len()];
        for (k, el) in elements.iter().enumerate() {
            let mut pts = Vec::with_capacity(el.len());
            for &v in el {
                let p = vertices.get(v).ok_or_else(|| {
                    GeometryError::Parameter(format!("element {k} references missing vertex {v}"))
                })?;
                used[v] = true;
                pts.push(*p);
            }
            let poly = Polygon::new(pts).map_err(|e| GeometryError::InvalidElement(format!("element {k}: {e}")))?;
            polygons.push(poly);
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(GeometryError::Parameter(format!("vertex {v} belongs to no element")));
        }
        let mut edge_use: BTreeMap<(usize, usize), Vec<(usize, bool)>> = BTreeMap::new();
        for (k, el) in elements.iter().enumerate() {
            for i in 0..el.len() {
                let (a, b) = (el[i], el[(i + 1) % el.len()]);
                edge_use.entry((a.min(b), a.max(b))).or_default().push((k, a < b));
            }
        }
        let mut boundary = vec![false; vertices.len()];
        for (&(a, b), uses) in &edge_use {
            match uses.as_slice() {
                [_] => {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let len = pa.distance(pb);
                    let hanging = vertices.iter().enumerate().any(|(v, &p)| {
                        if v == a || v == b {
                            return false;
                        }
                        let t = (p - pa).dot(pb - pa) / (len * len);
                        t > 0.0 && t < 1.0 && p.distance(pa.lerp(pb, t)) < 1e-12 * len
                    });
                    if hanging {
                        return Err(GeometryError::Parameter(format!(
                            "edge ({a}, {b}) contains a hanging vertex (mesh is not conforming)"
                        )));
                    }
                    boundary[a] = true;
                    boundary[b] = true;
                }
                [(_, o1), (_, o2)] if o1 != o2 => {}
                _ => {
                    return Err(GeometryError::Parameter(format!(
                        "edge ({a}, {b}) is not conforming ({} uses)",
                        uses.len()
                    )))
                }
            }
        }
        let h = polygons.iter().map(Polygon::diameter).fold(0.0, f64::max);
        Ok(Self {
            vertices,
            elements,
            boundary,
            polygons,
            h,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn interior_edges(&self) -> Vec<InteriorEdge> {
        let mut by_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out = Vec::new();
        for (k, el) in self.elements.iter().enumerate() {
            for i in 0..el.len() {
                let (a, b) = (el[i], el[(i + 1) % el.len()]);
                if let Some(left) = by_edge.remove(&(b, a)) {
                    out.push(InteriorEdge { a: b, b: a, left, right: k });
                } else {
                    by_edge.insert((a, b), k);
                }
            }
        }
        out.sort_by_key(|e| (e.a.min(e.b), e.a.max(e.b)));
        out
    }
}

/// Structured quadrilateral mesh of the unit square with `n` elements per side.
pub fn build_mesh_family(kind: MeshFamily, n: usize) -> Result<PolygonalMesh> {
    if n < 2 {
        return Err(GeometryError::Parameter(format!("need at least 2 elements per side, got {n}")));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            let on_boundary = i == 0 || j == 0 || i == n || j == n;
            let p = match kind {
                MeshFamily::SineDistorted if !on_boundary => {
                    let d = SINE_AMPLITUDE * (TAU * x).sin() * (TAU * y).sin();
                    Point2::new(x + d, y + d)
                }
                _ => Point2::new(x, y),
            };
            vertices.push(p);
        }
    }
    let mut elements = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            elements.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mesh = PolygonalMesh::from_elements(vertices, elements)?;
    if kind == MeshFamily::SineDistorted {
        let params = MeshAssumptionParams { rho: DISTORTED_RHO };
        for (k, p) in mesh.polygons().iter().enumerate() {
            p.check_mesh_assumptions(params).map_err(|which| {
                GeometryError::Parameter(format!("distorted element {k} violates '{which}'"))
            })?;
        }
    }
    Ok(mesh)
}

/// Serialises a mesh in the `navem-mesh v1` text format.
pub fn write_mesh(mesh: &PolygonalMesh) -> String {
    let mut s = String::new();
    writeln!(s, "{MESH_HEADER}").unwrap();
    writeln!(s, "{}", mesh.num_vertices()).unwrap();
    for (p, &b) in mesh.vertices().iter().zip(mesh.boundary_flags()) {
        writeln!(s, "{:?} {:?} {}", p.x, p.y, u8::from(b)).unwrap();
    }
    writeln!(s, "{}", mesh.num_elements()).unwrap();
    for el in mesh.elements() {
        write!(s, "{}", el.len()).unwrap();
        for v in el {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parses the `navem-mesh v1` text format. Blank lines and `#` comments are ignored.
pub fn parse_mesh(text: &str) -> Result<PolygonalMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| GeometryError::Parse { line, message };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")));

    let (ln, header) = next("header")?;
    if header != MESH_HEADER {
        return Err(err(ln, format!("expected header '{MESH_HEADER}'")));
    }
    let count = |ln: usize, s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| err(ln, format!("invalid {what} '{s}'")))
    };
    let (ln, l) = next("vertex count")?;
    let nv = count(ln, l, "vertex count")?;
    let mut vertices = Vec::new();
    let mut boundary = Vec::new();
    for _ in 0..nv {
        let (ln, l) = next("vertex line")?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        let [x, y, b] = fields[..] else {
            return Err(err(ln, "vertex line needs 'x y boundary_flag'".into()));
        };
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(ln, format!("invalid coordinate '{s}'")))
        };
        vertices.push(Point2::new(coord(x)?, coord(y)?));
        boundary.push(match b {
            "0" => false,
            "1" => true,
            other => return Err(err(ln, format!("boundary flag must be 0 or 1, got '{other}'"))),
        });
    }
    let (ln, l) = next("element count")?;
    let ne = count(ln, l, "element count")?;
    let mut elements = Vec::new();
    for _ in 0..ne {
        let (ln, l) = next("element line")?;
        let mut fields = l.split_whitespace();
        let k = count(ln, fields.next().unwrap_or(""), "element size")?;
        let ids = fields
            .map(|f| count(ln, f, "vertex index"))
            .collect::<Result<Vec<usize>>>()?;
        if ids.len() != k {
            return Err(err(ln, format!("element declares {k} vertices but lists {}", ids.len())));
        }
        elements.push(ids);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing content after last element".into()));
    }
    PolygonalMesh::new(vertices, elements, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_counts() {
        let m = build_mesh_family(MeshFamily::Cartesian, 4).unwrap();
        assert_eq!(m.num_elements(), 16);
        assert_eq!(m.num_vertices(), 25);
        assert!((m.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(m.boundary_flags().iter().filter(|&&b| b).count(), 16);
        assert_eq!(m.interior_edges().len(), 2 * 4 * 3);
        let a0 = m.polygons()[0].area();
        assert!(m.polygons().iter().all(|p| (p.area() - a0).abs() < 1e-15));
    }

    #[test]
    fn sine_family_keeps_boundary() {
        for n in [4, 8, 16, 32] {
            let c = build_mesh_family(MeshFamily::Cartesian, n).unwrap();
            let s = build_mesh_family(MeshFamily::SineDistorted, n).unwrap();
            assert_eq!(s.num_elements(), n * n);
            for v in 0..c.num_vertices() {
                if c.is_boundary(v) {
                    assert_eq!(c.vertices()[v], s.vertices()[v]);
                }
            }
            let area: f64 = s.polygons().iter().map(Polygon::area).sum();
            assert!((area - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn round_trip_through_text() {
        let m = build_mesh_family(MeshFamily::SineDistorted, 4).unwrap();
        let text = write_mesh(&m);
        assert!(text.starts_with(MESH_HEADER));
        assert_eq!(parse_mesh(&text).unwrap(), m);
    }

    #[test]
    fn parser_rejects_bad_input() {
        assert!(matches!(parse_mesh(""), Err(GeometryError::Parse { .. })));
        assert!(matches!(parse_mesh("navem-mesh v2\n"), Err(GeometryError::Parse { line: 1, .. })));
        let bad_flag = "navem-mesh v1\n3\n0 0 1\n1 0 1\n0 1 2\n1\n3 0 1 2\n";
        assert!(matches!(parse_mesh(bad_flag), Err(GeometryError::Parse { line: 5, .. })));
        let missing_vertex = "navem-mesh v1\n3\n0 0 1\n1 0 1\n0 1 1\n1\n3 0 1 7\n";
        assert!(matches!(parse_mesh(missing_vertex), Err(GeometryError::Parameter(_))));
        let wrong_flag = "navem-mesh v1\n3\n0 0 1\n1 0 0\n0 1 1\n1\n3 0 1 2\n";
        assert!(matches!(parse_mesh(wrong_flag), Err(GeometryError::Parameter(_))));
        let ok = "# one triangle\nnavem-mesh v1\n3\n0 0 1\n1 0 1 # right\n0 1 1\n1\n3 0 1 2\n";
        assert_eq!(parse_mesh(ok).unwrap().num_elements(), 1);
    }

    #[test]
    fn non_conforming_mesh_is_rejected() {
        // Hanging node: the long edge of the right square is split on the left only.
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.5),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
        ];
        let e = vec![vec![0, 1, 2, 3, 4], vec![1, 5, 6, 3]];
        assert!(PolygonalMesh::from_elements(v, e).is_err());
    }
}
