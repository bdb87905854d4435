//! Redundancy removal, Fourier–Motzkin elimination and affine images.

use super::linalg::{determinant, dot, invert, matmul, norm};
use super::lp::{is_feasible, lp_solve, Sense};
use super::polyhedron::{bounding_box, Polyhedron};
use super::REDUNDANCY_TOL;
use crate::error::{Error, Result};

/// Coefficients below this magnitude are treated as exact zeros during
/// elimination.
const ZERO_TOL: f64 = 1e-12;

/// Indices of the rows of `p` that are needed to define the set.
///
/// A row is kept iff maximizing it over the remaining rows exceeds its bound
/// by more than the redundancy tolerance. Rows are tested in order and
/// dropped rows are excluded from later tests, so among duplicates the first
/// survives. `p` should be feasible; rows of an empty polyhedron are kept.
pub fn remove_redundant_indices(p: &Polyhedron) -> Result<Vec<usize>> {
    let m = p.num_rows();
    if m == 0 {
        return Ok(Vec::new());
    }
    // Unit-norm rows; zero rows are trivially satisfied (feasible input).
    let mut rows: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(m);
    for i in 0..m {
        let n = norm(&p.a[i]);
        if n > 0.0 {
            rows.push((i, p.a[i].iter().map(|v| v / n).collect(), p.b[i] / n));
        } else if p.b[i] < 0.0 {
            rows.push((i, p.a[i].clone(), p.b[i]));
        }
    }
    if rows.iter().any(|(_, a, b)| a.iter().all(|v| *v == 0.0) && *b < 0.0) {
        return Ok((0..m).collect());
    }

    // Exact/near duplicates: keep the tighter (first on ties).
    let mut alive = vec![true; rows.len()];
    for i in 0..rows.len() {
        if !alive[i] {
            continue;
        }
        for j in i + 1..rows.len() {
            if alive[j] && rows[i].1.iter().zip(&rows[j].1).all(|(x, y)| (x - y).abs() <= ZERO_TOL) {
                if rows[j].2 < rows[i].2 {
                    alive[i] = false;
                    break;
                }
                alive[j] = false;
            }
        }
    }

    // Cheap prefilter: a row whose maximum over the bounding box stays below
    // its bound cannot be binding anywhere in the set.
    let normalized = Polyhedron {
        a: rows.iter().map(|r| r.1.clone()).collect(),
        b: rows.iter().map(|r| r.2).collect(),
        dim: p.dim,
    };
    match bounding_box(&normalized) {
        Ok(bb) => {
            for (k, (_, a, b)) in rows.iter().enumerate() {
                if !alive[k] {
                    continue;
                }
                let mut max = 0.0;
                for (j, &aj) in a.iter().enumerate() {
                    if aj > 0.0 {
                        max += aj * bb.hi[j];
                    } else if aj < 0.0 {
                        max += aj * bb.lo[j];
                    }
                }
                if max < b - REDUNDANCY_TOL {
                    alive[k] = false;
                }
            }
        }
        Err(Error::Infeasible) => return Ok((0..m).collect()),
        Err(e) => return Err(e),
    }

    // Exact test, one LP per surviving row.
    for k in 0..rows.len() {
        if !alive[k] {
            continue;
        }
        let mut q = Polyhedron::whole_space(p.dim);
        for (j, (_, a, b)) in rows.iter().enumerate() {
            if alive[j] && j != k {
                q.push(a.clone(), *b);
            }
        }
        q.push(rows[k].1.clone(), rows[k].2 + 1.0);
        match lp_solve(&rows[k].1, &q, Sense::Maximize) {
            Ok(sol) if sol.value <= rows[k].2 + REDUNDANCY_TOL => alive[k] = false,
            Ok(_) | Err(Error::Infeasible) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows
        .iter()
        .zip(&alive)
        .filter(|(_, &keep)| keep)
        .map(|(r, _)| r.0)
        .collect())
}

/// The same set as `p` described by irredundant rows only.
pub fn remove_redundant(p: &Polyhedron) -> Result<Polyhedron> {
    let keep = remove_redundant_indices(p)?;
    let mut out = Polyhedron::whole_space(p.dim);
    for i in keep {
        out.push(p.a[i].clone(), p.b[i]);
    }
    Ok(out)
}

/// Fourier–Motzkin elimination of coordinate `idx`: the projection of `p`
/// onto the remaining coordinates, with redundant rows removed.
pub fn eliminate(p: &Polyhedron, idx: usize) -> Result<Polyhedron> {
    if p.dim < 2 {
        return Err(Error::Argument("eliminate needs at least two dimensions".into()));
    }
    if idx >= p.dim {
        return Err(Error::Argument(format!(
            "coordinate {idx} out of range for dimension {}",
            p.dim
        )));
    }
    let q = p.normalized();
    let drop = |row: &[f64]| -> Vec<f64> {
        row.iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, v)| *v)
            .collect()
    };
    let mut out = Polyhedron::whole_space(p.dim - 1);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (row, &bi) in q.a.iter().zip(&q.b) {
        let c = row[idx];
        if c > ZERO_TOL {
            pos.push((row, bi, c));
        } else if c < -ZERO_TOL {
            neg.push((row, bi, -c));
        } else {
            out.push(drop(row), bi);
        }
    }
    for &(rp, bp, cp) in &pos {
        for &(rn, bn, cn) in &neg {
            let row: Vec<f64> = rp.iter().zip(rn).map(|(x, y)| x / cp + y / cn).collect();
            out.push(drop(&row), bp / cp + bn / cn);
        }
    }
    let out = out.normalized();
    if is_feasible(&out) {
        remove_redundant(&out)
    } else {
        Ok(out)
    }
}

/// Image `{C x + d | x ∈ p}` of `p` under an affine map with `C` of shape
/// `m × p.dim`.
///
/// Square nonsingular maps are inverted directly. Injective rectangular maps
/// invert a well-conditioned square row subset and keep the remaining output
/// coordinates as equality constraints. Anything else is lifted to `(x, y)`
/// space and `x` is removed by Fourier–Motzkin elimination.
pub fn affine_image(p: &Polyhedron, c: &[Vec<f64>], d: &[f64]) -> Result<Polyhedron> {
    let n = p.dim;
    let m = c.len();
    if d.len() != m || c.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension {
            expected: m,
            found: d.len(),
        });
    }
    if let Some(subset) = invertible_rows(c, n) {
        return Ok(image_by_inverse(p, c, d, &subset));
    }
    // Lift: rows over (x, y).
    let mut lifted = Polyhedron::whole_space(n + m);
    for (row, &bi) in p.a.iter().zip(&p.b) {
        let mut r = row.clone();
        r.extend(std::iter::repeat(0.0).take(m));
        lifted.push(r, bi);
    }
    for k in 0..m {
        let mut up: Vec<f64> = c[k].iter().map(|v| -v).collect();
        up.extend((0..m).map(|j| if j == k { 1.0 } else { 0.0 }));
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        lifted.push(up, d[k]);
        lifted.push(down, -d[k]);
    }
    let mut cur = lifted;
    for _ in 0..n {
        cur = eliminate(&cur, 0)?;
    }
    Ok(cur)
}

/// Picks `n` rows of `c` forming a nonsingular square block, preferring the
/// block with the largest |determinant| when there are few candidates.
fn invertible_rows(c: &[Vec<f64>], n: usize) -> Option<Vec<usize>> {
    let m = c.len();
    if m < n || n == 0 {
        return None;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |subset: Vec<usize>| {
        let block: Vec<Vec<f64>> = subset.iter().map(|&i| c[i].clone()).collect();
        let det = determinant(&block).abs();
        let scale: f64 = block.iter().map(|r| norm(r).max(1e-300)).product();
        if det > 1e-10 && det / scale > 1e-12 && best.as_ref().map_or(true, |(b, _)| det > *b) {
            best = Some((det, subset));
        }
    };
    if m == n {
        consider((0..n).collect());
    } else if m == n + 1 {
        // Drop one row at a time, later rows dropped first so ties favour the
        // leading rows.
        for skip in (0..m).rev() {
            consider((0..m).filter(|&i| i != skip).collect());
        }
    } else {
        // Greedy Gram–Schmidt selection.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut chosen = Vec::new();
        for (i, row) in c.iter().enumerate() {
            let mut r = row.clone();
            for q in &basis {
                let proj = dot(&r, q);
                for (x, y) in r.iter_mut().zip(q) {
                    *x -= proj * y;
                }
            }
            let nr = norm(&r);
            if nr > 1e-9 * norm(row).max(1e-300) {
                basis.push(r.iter().map(|v| v / nr).collect());
                chosen.push(i);
                if chosen.len() == n {
                    break;
                }
            }
        }
        if chosen.len() == n {
            consider(chosen);
        }
    }
    best.map(|(_, s)| s)
}

fn image_by_inverse(p: &Polyhedron, c: &[Vec<f64>], d: &[f64], subset: &[usize]) -> Polyhedron {
    let m = c.len();
    let block: Vec<Vec<f64>> = subset.iter().map(|&i| c[i].clone()).collect();
    let inv = invert(&block).expect("subset chosen to be nonsingular");
    let d_s: Vec<f64> = subset.iter().map(|&i| d[i]).collect();
    // Embed an n-vector over y_S into an m-vector over y.
    let embed = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (k, &i) in subset.iter().enumerate() {
            out[i] = v[k];
        }
        out
    };
    let mut out = Polyhedron::whole_space(m);
    let a_inv = matmul(&p.a, &inv);
    for (row, &bi) in a_inv.iter().zip(&p.b) {
        out.push(embed(row), bi + dot(row, &d_s));
    }
    let c_inv = matmul(c, &inv);
    for r in 0..m {
        if subset.contains(&r) {
            continue;
        }
        let mut row: Vec<f64> = embed(&c_inv[r]).iter().map(|v| -v).collect();
        row[r] += 1.0;
        let rhs = d[r] - dot(&c_inv[r], &d_s);
        out.push(row.clone(), rhs);
        out.push(row.iter().map(|v| -v).collect(), -rhs);
    }
    out
}
