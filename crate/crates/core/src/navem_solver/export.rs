use super::{ElementBasisEval, NavemError};
use crate::geometry::{quadrature_on_polygon, PolygonalMesh};

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub err2: f64,
    pub err1: f64,
}

fn local_rate(prev: &ErrorRow, cur: &ErrorRow, pick: fn(&ErrorRow) -> f64) -> f64 {
    (pick(cur) / pick(prev)).ln() / (cur.h / prev.h).ln()
}

/// CSV `h,err2,err1,rate2,rate1`; rates compare each row with the previous one and are
/// empty on the first row.
pub fn error_report_csv(rows: &[ErrorRow]) -> String {
    let mut s = String::from("h,err2,err1,rate2,rate1\n");
    for (k, r) in rows.iter().enumerate() {
        let (r2, r1) = if k == 0 {
            (String::new(), String::new())
        } else {
            (
                format!("{:e}", local_rate(&rows[k - 1], r, |r| r.err2)),
                format!("{:e}", local_rate(&rows[k - 1], r, |r| r.err1)),
            )
        };
        s.push_str(&format!("{:e},{:e},{:e},{r2},{r1}\n", r.h, r.err2, r.err1));
    }
    s
}

/// CSV `vertex_id,x,y,u`.
pub fn solution_csv(mesh: &PolygonalMesh, dofs: &[f64]) -> String {
    let mut s = String::from("vertex_id,x,y,u\n");
    for (i, (p, u)) in mesh.vertices().iter().zip(dofs).enumerate() {
        s.push_str(&format!("{i},{:e},{:e},{:e}\n", p.x, p.y, u));
    }
    s
}

/// CSV `element,x,y,u` of u_h sampled at low-order quadrature points of every element.
pub fn sampled_field_csv(mesh: &PolygonalMesh, bases: &[ElementBasisEval], dofs: &[f64]) -> Result<String, NavemError> {
    let mut s = String::from("element,x,y,u\n");
    for (k, (poly, eval)) in mesh.polygons().iter().zip(bases).enumerate() {
        let local: Vec<f64> = mesh.elements()[k].iter().map(|&i| dofs[i]).collect();
        for q in quadrature_on_polygon(poly, 2)? {
            let (u, _) = eval.combine(&local, q.point);
            s.push_str(&format!("{k},{:e},{:e},{:e}\n", q.point.x, q.point.y, u));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rates() {
        let rows = [
            ErrorRow { h: 0.5, err2: 0.4, err1: 2.0 },
            ErrorRow { h: 0.25, err2: 0.1, err1: 1.0 },
        ];
        let csv = error_report_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,err2,err1,rate2,rate1");
        assert!(lines[1].ends_with(",,"));
        assert!(lines[2].ends_with(",2e0,1e0"), "{}", lines[2]);
    }
}
