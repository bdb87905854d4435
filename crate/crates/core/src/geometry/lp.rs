//! Dense two-phase simplex over free decision variables.
//!
//! The program `max cᵀx s.t. A x ≤ b` is kept as a dictionary
//! `s = b − A x`, where the decision variables `x` are free and the slacks
//! `s` are non-negative. Phase one uses a single artificial variable; both
//! phases use Bland's smallest-index rule, which rules out cycling. Rows are
//! scaled to unit norm first so one absolute tolerance fits every row.

use super::polyhedron::Polyhedron;
use super::FEAS_TOL;
use crate::error::{Error, Result};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Optimal value and an optimal point.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-10;
/// Reduced costs below `NOISE_FACTOR · opt_tol` are not trusted to signal
/// unboundedness.
const NOISE_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Free,
    NonNeg,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols` coefficients: `x_B[i] = beta[i] − Σ_j a[i][j] x_N[j]`.
    a: Vec<f64>,
    beta: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    kind: Vec<Kind>,
    /// Reduced objective coefficients of the nonbasic columns.
    gamma: Vec<f64>,
    obj0: f64,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.a[r * cols + j];
        // Pivot row.
        self.beta[r] /= p;
        for k in 0..cols {
            if k != j {
                self.a[r * cols + k] /= p;
            }
        }
        self.a[r * cols + j] = 1.0 / p;
        // Other rows.
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + j];
            if f == 0.0 {
                continue;
            }
            self.beta[i] -= f * self.beta[r];
            for k in 0..cols {
                if k != j {
                    self.a[i * cols + k] -= f * self.a[r * cols + k];
                }
            }
            self.a[i * cols + j] = -f / p;
        }
        // Objective row.
        let g = self.gamma[j];
        if g != 0.0 {
            self.obj0 += g * self.beta[r];
            for k in 0..cols {
                if k != j {
                    self.gamma[k] -= g * self.a[r * cols + k];
                }
            }
            self.gamma[j] = -g / p;
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[j]);
    }

    /// Runs simplex iterations on the current objective until optimal.
    fn optimize(&mut self, opt_tol: f64) -> Result<()> {
        let limit = 200 * (self.rows + self.cols) + 1000;
        // Columns whose reduced cost is roundoff-sized and which admit no
        // blocking row: they describe a direction of (numerically) zero
        // improvement, not an unbounded ray, so they are excluded until the
        // next pivot changes the tableau.
        let mut stalled = vec![false; self.cols];
        for _ in 0..limit {
            // Bland: entering column with the smallest variable index.
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                let var = self.nonbasic[j];
                let g = self.gamma[j];
                let improving = match self.kind[var] {
                    Kind::Free => g.abs() > opt_tol,
                    Kind::NonNeg => g > opt_tol,
                };
                if improving && !stalled[j] && enter.map_or(true, |(e, _)| var < self.nonbasic[e]) {
                    enter = Some((j, g.signum()));
                }
            }
            let Some((j, dir)) = enter else {
                return Ok(());
            };
            // Ratio test over the non-negative basic variables.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                if self.kind[self.basic[i]] != Kind::NonNeg {
                    continue;
                }
                let coef = self.at(i, j) * dir;
                if coef <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.beta[i].max(0.0) / coef;
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best - 1e-13 || (ratio <= best + 1e-13 && self.basic[i] < self.basic[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, _)) = leave else {
                if self.gamma[j].abs() <= NOISE_FACTOR * opt_tol {
                    stalled[j] = true;
                    continue;
                }
                return Err(Error::Unbounded);
            };
            stalled.iter_mut().for_each(|s| *s = false);
            self.pivot(r, j);
        }
        Err(Error::IterationLimit)
    }

    fn remove_column(&mut self, j: usize) {
        let cols = self.cols;
        let mut a = Vec::with_capacity(self.rows * (cols - 1));
        for i in 0..self.rows {
            for k in 0..cols {
                if k != j {
                    a.push(self.a[i * cols + k]);
                }
            }
        }
        self.a = a;
        self.cols -= 1;
        self.nonbasic.remove(j);
        self.gamma.remove(j);
    }
}

/// Optimizes `cᵀx` over `p`.
///
/// Returns [`Error::Infeasible`] for an empty polyhedron and
/// [`Error::Unbounded`] when the objective is unbounded in the chosen sense.
pub fn lp_solve(c: &[f64], p: &Polyhedron, sense: Sense) -> Result<LpSolution> {
    if c.len() != p.dim {
        return Err(Error::Dimension {
            expected: p.dim,
            found: c.len(),
        });
    }
    let n = p.dim;
    let q = p.normalized();
    let m = q.num_rows();
    let sign = if sense == Sense::Maximize { 1.0 } else { -1.0 };
    let cmax: f64 = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let opt_tol = 1e-11 * cmax.max(1.0);

    // Variables: 0..n decision (free), n..n+m slacks, n+m artificial.
    let art = n + m;
    let mut kind = vec![Kind::Free; n];
    kind.extend(std::iter::repeat(Kind::NonNeg).take(m + 1));

    let min_row = (0..m).min_by(|&i, &j| q.b[i].total_cmp(&q.b[j]));
    let needs_phase1 = min_row.is_some_and(|r| q.b[r] < 0.0);
    let cols = n + usize::from(needs_phase1);
    let mut a = Vec::with_capacity(m * cols);
    for i in 0..m {
        a.extend_from_slice(&q.a[i]);
        if needs_phase1 {
            a.push(-1.0);
        }
    }
    let mut nonbasic: Vec<usize> = (0..n).collect();
    if needs_phase1 {
        nonbasic.push(art);
    }
    let mut t = Tableau {
        rows: m,
        cols,
        a,
        beta: q.b.clone(),
        basic: (n..n + m).collect(),
        nonbasic,
        kind,
        gamma: vec![0.0; cols],
        obj0: 0.0,
    };

    if needs_phase1 {
        // Maximize −artificial after forcing it into the most violated row.
        t.gamma[n] = -1.0;
        t.pivot(min_row.unwrap(), n);
        t.optimize(1e-12)?;
        if t.obj0 < -FEAS_TOL {
            return Err(Error::Infeasible);
        }
        if let Some(r) = t.basic.iter().position(|&v| v == art) {
            let pick = (0..t.cols)
                .filter(|&j| t.at(r, j).abs() > PIVOT_TOL)
                .max_by(|&x, &y| t.at(r, x).abs().total_cmp(&t.at(r, y).abs()));
            if let Some(j) = pick {
                t.pivot(r, j);
            }
        }
        if let Some(j) = t.nonbasic.iter().position(|&v| v == art) {
            t.remove_column(j);
        }
    }

    // Phase two objective in terms of the current nonbasic variables.
    let cost = |var: usize| if var < n { sign * c[var] } else { 0.0 };
    t.obj0 = 0.0;
    for i in 0..t.rows {
        t.obj0 += cost(t.basic[i]) * t.beta[i];
    }
    for j in 0..t.cols {
        let mut g = cost(t.nonbasic[j]);
        for i in 0..t.rows {
            let cb = cost(t.basic[i]);
            if cb != 0.0 {
                g -= cb * t.at(i, j);
            }
        }
        t.gamma[j] = g;
    }
    t.optimize(opt_tol)?;

    let mut point = vec![0.0; n];
    for (i, &var) in t.basic.iter().enumerate() {
        if var < n {
            point[var] = t.beta[i];
        }
    }
    let value = c.iter().zip(&point).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { value, point })
}

/// True iff `p` is non-empty (within the feasibility tolerance).
pub fn is_feasible(p: &Polyhedron) -> bool {
    match lp_solve(&vec![0.0; p.dim], p, Sense::Maximize) {
        Ok(_) => true,
        Err(Error::Infeasible) => false,
        Err(e) => {
            // Claiming feasibility is the conservative answer for verification.
            log::warn!("feasibility check inconclusive ({e}); treating as feasible");
            true
        }
    }
}

/// Center and radius of the largest ball inscribed in `p`, capped at
/// `radius_cap` so unbounded polyhedra still have a well-defined answer.
/// Empty polyhedra yield radius `-inf`; a radius near zero means `p` has no
/// interior.
pub fn chebyshev_center(p: &Polyhedron, radius_cap: f64) -> Result<(Vec<f64>, f64)> {
    let n = p.dim;
    let mut lifted = Polyhedron::whole_space(n + 1);
    for (row, &bi) in p.a.iter().zip(&p.b) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = row.clone();
        r.push(norm);
        lifted.push(r, bi);
    }
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    lifted.push(cap.clone(), radius_cap);
    match lp_solve(&cap, &lifted, Sense::Maximize) {
        Ok(sol) => {
            let mut x = sol.point;
            let r = x.pop().unwrap();
            Ok((x, r))
        }
        Err(Error::Infeasible) => Ok((vec![0.0; n], f64::NEG_INFINITY)),
        Err(e) => Err(e),
    }
}
