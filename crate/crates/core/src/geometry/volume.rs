//! Vertex enumeration and exact volume of bounded polytopes.

use super::linalg::{determinant, dot, solve};
use super::lp::chebyshev_center;
use super::polyhedron::{bounding_box, Polyhedron};
use super::project::remove_redundant_indices;
use super::{FEAS_TOL, VERTEX_TOL};
use crate::error::{Error, Result};

/// Largest dimension handled by vertex enumeration.
pub const MAX_VERTEX_DIM: usize = 6;

/// Slack under which a row counts as tight at a vertex.
const TIGHT_TOL: f64 = 1e-8;

struct VertexData {
    points: Vec<Vec<f64>>,
    /// Indices (into the irredundant unit-norm rows) tight at each point.
    tight: Vec<Vec<usize>>,
}

fn check_dim(p: &Polyhedron) -> Result<()> {
    if p.dim == 0 || p.dim > MAX_VERTEX_DIM {
        return Err(Error::Argument(format!(
            "vertex enumeration supports 1..={MAX_VERTEX_DIM} dimensions, got {}",
            p.dim
        )));
    }
    Ok(())
}

fn vertex_data(p: &Polyhedron) -> Result<Option<VertexData>> {
    check_dim(p)?;
    let bb = match bounding_box(p) {
        Ok(bb) => bb,
        Err(Error::Infeasible) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !bb.is_bounded() {
        return Err(Error::Unbounded);
    }
    let q = p.normalized();
    let keep = remove_redundant_indices(&q)?;
    let rows: Vec<&Vec<f64>> = keep.iter().map(|&i| &q.a[i]).collect();
    let rhs: Vec<f64> = keep.iter().map(|&i| q.b[i]).collect();
    let d = p.dim;
    let m = rows.len();

    let mut points: Vec<Vec<f64>> = Vec::new();
    if m >= d {
        let mut subset: Vec<usize> = (0..d).collect();
        loop {
            let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].clone()).collect();
            let b: Vec<f64> = subset.iter().map(|&i| rhs[i]).collect();
            if let Some(x) = solve(&a, &b) {
                let inside = rows.iter().zip(&rhs).all(|(r, &bi)| dot(r, &x) <= bi + FEAS_TOL);
                let dup = points
                    .iter()
                    .any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() <= VERTEX_TOL));
                if inside && !dup {
                    points.push(x);
                }
            }
            if !next_combination(&mut subset, m) {
                break;
            }
        }
    }
    let tight = points
        .iter()
        .map(|x| {
            (0..m)
                .filter(|&i| (dot(rows[i], x) - rhs[i]).abs() <= TIGHT_TOL)
                .collect()
        })
        .collect();
    Ok(Some(VertexData { points, tight }))
}

/// Advances `subset` to the next increasing k-subset of `0..m`.
fn next_combination(subset: &mut [usize], m: usize) -> bool {
    let k = subset.len();
    for i in (0..k).rev() {
        if subset[i] < m - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All vertices of the bounded polyhedron `p` (empty for an empty `p`).
pub fn vertices(p: &Polyhedron) -> Result<Vec<Vec<f64>>> {
    Ok(vertex_data(p)?.map_or_else(Vec::new, |v| v.points))
}

/// Exact volume of the bounded polyhedron `p` by recursive fan
/// triangulation from face centroids. Lower-dimensional or empty sets have
/// volume 0.
pub fn volume(p: &Polyhedron) -> Result<f64> {
    check_dim(p)?;
    let (_, radius) = chebyshev_center(p, 1e12)?;
    if !(radius > 1e-12) {
        return Ok(0.0);
    }
    if p.dim == 1 {
        let bb = bounding_box(p)?;
        if !bb.is_bounded() {
            return Err(Error::Unbounded);
        }
        return Ok(bb.hi[0] - bb.lo[0]);
    }
    let Some(data) = vertex_data(p)? else {
        return Ok(0.0);
    };
    let d = p.dim;
    if data.points.len() < d + 1 {
        return Ok(0.0);
    }
    let all: Vec<usize> = (0..data.points.len()).collect();
    let mut acc = 0.0;
    let mut apexes = Vec::with_capacity(d);
    fan(&data, &all, d, &mut apexes, &mut acc);
    let factorial: f64 = (1..=d).map(|k| k as f64).product();
    Ok(acc / factorial)
}

/// Adds `d! ·` volume of the cone from `apexes` over the `k`-face `face`.
fn fan(data: &VertexData, face: &[usize], k: usize, apexes: &mut Vec<Vec<f64>>, acc: &mut f64) {
    if k == 0 {
        let base = &apexes[0];
        let mut rows: Vec<Vec<f64>> = apexes[1..]
            .iter()
            .map(|p| p.iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        let v = &data.points[face[0]];
        rows.push(v.iter().zip(base).map(|(a, b)| a - b).collect());
        *acc += determinant(&rows).abs();
        return;
    }
    let dim = data.points[0].len();
    let mut centroid = vec![0.0; dim];
    for &i in face {
        for (c, v) in centroid.iter_mut().zip(&data.points[i]) {
            *c += v;
        }
    }
    for c in &mut centroid {
        *c /= face.len() as f64;
    }
    apexes.push(centroid);
    for sub in facets(data, face, k) {
        fan(data, &sub, k - 1, apexes, acc);
    }
    apexes.pop();
}

/// Vertex sets of the (k−1)-faces of the k-face `face`.
fn facets(data: &VertexData, face: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = face.iter().flat_map(|&v| data.tight[v].iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for r in rows {
        let s: Vec<usize> = face
            .iter()
            .copied()
            .filter(|&v| data.tight[v].binary_search(&r).is_ok())
            .collect();
        if s.len() >= k && s.len() < face.len() && !sets.contains(&s) {
            sets.push(s);
        }
    }
    let is_subset = |a: &[usize], b: &[usize]| a.iter().all(|x| b.binary_search(x).is_ok());
    sets.iter()
        .filter(|s| !sets.iter().any(|o| o.len() > s.len() && is_subset(s, o)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> Polyhedron {
        Polyhedron::from_box(&vec![0.0; d], &vec![1.0; d])
    }

    fn simplex(d: usize) -> Polyhedron {
        let mut p = Polyhedron::whole_space(d);
        for i in 0..d {
            let mut r = vec![0.0; d];
            r[i] = -1.0;
            p.push(r, 0.0);
        }
        p.push(vec![1.0; d], 1.0);
        p
    }

    #[test]
    fn square_has_four_vertices() {
        assert_eq!(vertices(&unit_box(2)).unwrap().len(), 4);
    }

    #[test]
    fn triangle_has_three_vertices() {
        assert_eq!(vertices(&simplex(2)).unwrap().len(), 3);
    }

    #[test]
    fn hypercube_volume_is_one() {
        for d in 1..=6 {
            let v = volume(&unit_box(d)).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "d={d}: {v}");
        }
    }

    #[test]
    fn simplex_volume_is_inverse_factorial() {
        for d in 1..=6 {
            let f: f64 = (1..=d).map(|k| k as f64).product();
            let v = volume(&simplex(d)).unwrap();
            assert!((v - 1.0 / f).abs() < 1e-12, "d={d}: {v}");
        }
    }

    #[test]
    fn degenerate_is_zero() {
        let mut p = unit_box(2);
        p.push(vec![1.0, 0.0], 0.0);
        assert_eq!(volume(&p).unwrap(), 0.0);
        let mut empty = unit_box(3);
        empty.push(vec![1.0, 0.0, 0.0], -1.0);
        assert_eq!(volume(&empty).unwrap(), 0.0);
    }

    #[test]
    fn unbounded_errors() {
        let p = Polyhedron::new(vec![vec![1.0, 0.0]], vec![1.0], 2).unwrap();
        assert!(matches!(vertices(&p), Err(Error::Unbounded)));
        assert!(matches!(volume(&p), Err(Error::Unbounded)));
    }

    #[test]
    fn hexagon_area() {
        let mut p = Polyhedron::whole_space(2);
        let apothem = 3f64.sqrt() / 2.0;
        for k in 0..6 {
            let th = std::f64::consts::PI / 3.0 * k as f64 + std::f64::consts::PI / 6.0;
            p.push(vec![th.cos(), th.sin()], apothem);
        }
        assert_eq!(vertices(&p).unwrap().len(), 6);
        let v = volume(&p).unwrap();
        assert!((v - 1.5 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cross_polytope_volume() {
        // |x|+|y|+|z| ≤ 1 has volume 8/6 and many degenerate triples.
        let mut p = Polyhedron::whole_space(3);
        for s in 0..8 {
            let row: Vec<f64> = (0..3).map(|i| if s >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            p.push(row, 1.0);
        }
        assert_eq!(vertices(&p).unwrap().len(), 6);
        assert!((volume(&p).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }
}
