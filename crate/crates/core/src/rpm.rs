//! Exact piecewise-affine enumeration of a ReLU network at a fixed time.
//!
//! Fixing `t` turns the network into a ReLU network over the initial state
//! alone ([`slice_net`]). Each activation pattern defines a polyhedral cell
//! of inputs on which the network is one affine map; [`enumerate_cells`]
//! marches from cell to cell across facets until the domain is covered.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    affine_image, bounding_box, chebyshev_center, lp_solve, remove_redundant_indices, volume, HyperRectangle,
    Polyhedron, Sense, FEAS_TOL,
};
use crate::net::{DensityNet, Layer};
use crate::systems::SystemId;

/// A built cell together with the activation patterns of its neighbours.
type Expansion = (AffineCell, Vec<ActivationPattern>);

/// Partition cache format version.
pub const PARTITION_VERSION: u64 = 1;
/// Default maximum number of cells before enumeration gives up.
pub const DEFAULT_CELL_BUDGET: usize = 200_000;
/// Largest state dimension accepted by [`enumerate_cells`].
pub const MAX_STATE_DIM: usize = 4;
/// Distance a facet point is pushed along the facet normal to sample the
/// neighbouring cell; grown tenfold (twice) when it does not change the
/// pattern.
pub const CROSS_OFFSET: f64 = 1e-7;
/// Cells whose inscribed ball is smaller than this are treated as
/// degenerate (measure zero) and dropped.
pub const MIN_CELL_RADIUS: f64 = 1e-9;

/// A density network with the time input folded into the first-layer biases
/// and the input normalization folded into the first-layer weights: a plain
/// affine/ReLU network over the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedNet {
    pub state_dim: usize,
    pub layers: Vec<Layer>,
    pub t: f64,
}

impl SlicedNet {
    /// Total number of hidden neurons.
    pub fn hidden_count(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).sum()
    }

    /// Network output `[z, x̂...]`.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if l < last {
                for v in &mut h {
                    *v = v.max(0.0);
                }
            }
        }
        h
    }

    /// Hidden pre-activations, layer by layer.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut out = Vec::with_capacity(self.hidden_count());
        let mut h = x.to_vec();
        for layer in &self.layers[..last] {
            h = layer.apply(&h);
            out.extend_from_slice(&h);
            for v in &mut h {
                *v = v.max(0.0);
            }
        }
        out
    }
}

/// Fixes the time input of `net` at `t`.
pub fn slice_net(net: &DensityNet, t: f64) -> SlicedNet {
    let n = net.state_dim;
    let first = &net.layers[0];
    let (shift, scale) = (&net.norm.shift, &net.norm.scale);
    let mut l0 = Layer::zeros(first.rows, n);
    for i in 0..first.rows {
        let mut b = first.bias[i] + first.w(i, n) * ((t - shift[n]) / scale[n]);
        for j in 0..n {
            let w = first.w(i, j) / scale[j];
            l0.weights[i * n + j] = w;
            b -= w * shift[j];
        }
        l0.bias[i] = b;
    }
    let mut layers = vec![l0];
    layers.extend(net.layers[1..].iter().cloned());
    SlicedNet {
        state_dim: n,
        layers,
        t,
    }
}

/// One bit per hidden neuron: `true` iff its pre-activation is positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ActivationPattern(pub Vec<bool>);

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ActivationPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Argument(format!("invalid activation bit {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ActivationPattern)
    }
}

impl From<ActivationPattern> for String {
    fn from(p: ActivationPattern) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for ActivationPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Activation pattern of `sliced` at `x`; an exact zero counts as inactive.
pub fn activation_pattern(sliced: &SlicedNet, x: &[f64]) -> Result<ActivationPattern> {
    if x.len() != sliced.state_dim {
        return Err(Error::Dimension {
            expected: sliced.state_dim,
            found: x.len(),
        });
    }
    Ok(ActivationPattern(
        sliced.pre_activations(x).into_iter().map(|v| v > 0.0).collect(),
    ))
}

/// One region of the partition: on `h` the sliced network equals
/// `x ↦ c·x + d`, whose first output row is `z` and the rest are `x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCell {
    pub pattern: ActivationPattern,
    /// Input cell, irredundant, unit-norm rows.
    pub h: Polyhedron,
    /// `(n+1) × n` map matrix.
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    /// Output cell in `(z, x)` coordinates.
    pub m: Polyhedron,
    pub z_lo: f64,
    pub z_hi: f64,
    /// Bounding box of `m`.
    pub out_box: HyperRectangle,
    /// Chebyshev center and radius of `h`.
    pub center: Vec<f64>,
    pub radius: f64,
    /// Volume of `h`.
    pub volume: f64,
    pub t: f64,
}

impl AffineCell {
    /// `c·x + d`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.c
            .iter()
            .zip(&self.d)
            .map(|(row, di)| di + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// The flow rows of the map, `(C_x, d_x)`.
    pub fn state_map(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.c[1..].to_vec(), self.d[1..].to_vec())
    }

    /// The `z` row of the map.
    pub fn z_map(&self) -> (&[f64], f64) {
        (&self.c[0], self.d[0])
    }

    /// The same affine piece restricted to `h ∩ extra`, or `None` if that
    /// has no interior.
    pub fn restrict(&self, extra: &Polyhedron) -> Result<Option<AffineCell>> {
        let mut full = self.h.clone();
        for (a, &b) in extra.a.iter().zip(&extra.b) {
            if let Some((a, b)) = unit_row(a, b) {
                full.push(a, b);
            }
        }
        Ok(assemble(self.pattern.clone(), &full, self.c.clone(), self.d.clone(), self.t)?.map(|(c, _)| c))
    }
}

/// A cell together with which of its rows come from the domain.
struct BuiltCell {
    cell: AffineCell,
    domain_row: Vec<bool>,
}

fn unit_row(row: &[f64], rhs: f64) -> Option<(Vec<f64>, f64)> {
    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n > 0.0).then(|| (row.iter().map(|v| v / n).collect(), rhs / n))
}

fn build_cell(sliced: &SlicedNet, pattern: &ActivationPattern, domain: &Polyhedron) -> Result<Option<BuiltCell>> {
    let n = sliced.state_dim;
    if pattern.0.len() != sliced.hidden_count() {
        return Err(Error::Argument(format!(
            "pattern has {} bits, network has {} hidden neurons",
            pattern.0.len(),
            sliced.hidden_count()
        )));
    }
    if domain.dim != n {
        return Err(Error::Dimension {
            expected: n,
            found: domain.dim,
        });
    }
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (a, &b) in domain.a.iter().zip(&domain.b) {
        match unit_row(a, b) {
            Some((a, b)) => rows.push((a, b, true)),
            None if b < 0.0 => return Ok(None),
            None => {}
        }
    }

    // Affine form of the current layer input as a function of x.
    let mut cur: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut off = vec![0.0; n];
    let last = sliced.layers.len() - 1;
    let mut bit = 0;
    for layer in &sliced.layers[..last] {
        let mut p = vec![vec![0.0; n]; layer.rows];
        let mut q = layer.bias.clone();
        for i in 0..layer.rows {
            for k in 0..layer.cols {
                let w = layer.w(i, k);
                if w != 0.0 {
                    for j in 0..n {
                        p[i][j] += w * cur[k][j];
                    }
                    q[i] += w * off[k];
                }
            }
            let active = pattern.0[bit];
            bit += 1;
            // active: p·x + q ≥ 0 (closure); inactive: p·x + q ≤ 0.
            let (row, rhs) = if active {
                (p[i].iter().map(|v| -v).collect::<Vec<_>>(), q[i])
            } else {
                (p[i].clone(), -q[i])
            };
            match unit_row(&row, rhs) {
                Some((a, b)) => rows.push((a, b, false)),
                None => {
                    // Constant pre-activation on the whole input space.
                    if (active && q[i] <= 0.0) || (!active && q[i] > 0.0) {
                        return Ok(None);
                    }
                }
            }
            if !active {
                p[i].iter_mut().for_each(|v| *v = 0.0);
                q[i] = 0.0;
            }
        }
        cur = p;
        off = q;
    }
    let out = &sliced.layers[last];
    let mut c = vec![vec![0.0; n]; out.rows];
    let mut d = out.bias.clone();
    for i in 0..out.rows {
        for k in 0..out.cols {
            let w = out.w(i, k);
            if w != 0.0 {
                for j in 0..n {
                    c[i][j] += w * cur[k][j];
                }
                d[i] += w * off[k];
            }
        }
    }

    let full = Polyhedron {
        a: rows.iter().map(|r| r.0.clone()).collect(),
        b: rows.iter().map(|r| r.1).collect(),
        dim: n,
    };
    let Some((cell, keep)) = assemble(pattern.clone(), &full, c, d, sliced.t)? else {
        return Ok(None);
    };
    Ok(Some(BuiltCell {
        cell,
        domain_row: keep.iter().map(|&i| rows[i].2).collect(),
    }))
}

/// Completes a cell from its (possibly redundant) input constraints and map:
/// drops degenerate regions, removes redundant rows and computes the output
/// cell, output box and volume. Returns the kept row indices of `full`.
fn assemble(
    pattern: ActivationPattern,
    full: &Polyhedron,
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
    t: f64,
) -> Result<Option<(AffineCell, Vec<usize>)>> {
    let n = full.dim;
    let (center, radius) = chebyshev_center(full, 1e6)?;
    if !(radius >= MIN_CELL_RADIUS) {
        return Ok(None);
    }
    let keep = remove_redundant_indices(full)?;
    let h = Polyhedron {
        a: keep.iter().map(|&i| full.a[i].clone()).collect(),
        b: keep.iter().map(|&i| full.b[i]).collect(),
        dim: n,
    };
    let mut lo = Vec::with_capacity(c.len());
    let mut hi = Vec::with_capacity(c.len());
    for (row, di) in c.iter().zip(&d) {
        lo.push(lp_solve(row, &h, Sense::Minimize)?.value + di);
        hi.push(lp_solve(row, &h, Sense::Maximize)?.value + di);
    }
    let m = affine_image(&h, &c, &d)?;
    let vol = volume(&h)?;
    let cell = AffineCell {
        pattern,
        z_lo: lo[0],
        z_hi: hi[0].max(lo[0]),
        out_box: HyperRectangle {
            hi: hi.iter().zip(&lo).map(|(h, l)| h.max(*l)).collect(),
            lo,
        },
        h,
        c,
        d,
        m,
        center,
        radius,
        volume: vol,
        t,
    };
    Ok(Some((cell, keep)))
}

/// The cell of `pattern` inside `domain`, or `None` when that pattern's
/// region is empty or has no interior.
pub fn cell_of(sliced: &SlicedNet, pattern: &ActivationPattern, domain: &Polyhedron) -> Result<Option<AffineCell>> {
    Ok(build_cell(sliced, pattern, domain)?.map(|b| b.cell))
}

/// Orthonormal basis (as rows) of the hyperplane orthogonal to the unit
/// vector `u`, from the Householder reflection that maps `u` to an axis.
fn orthogonal_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let k = (0..n).max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap_or(0);
    let s = if u[k] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u.to_vec();
    v[k] += s;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    (0..n)
        .filter(|&j| j != k)
        .map(|j| {
            (0..n)
                .map(|i| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j] / vv)
                .collect()
        })
        .collect()
}

/// A point in the relative interior of facet `i` of `h`, as far as possible
/// from the facet's boundary; `None` if the facet has no relative interior.
///
/// The facet hyperplane is parametrized as `x = p0 + Nᵀy` with `N` an
/// orthonormal basis of its directions, so the inscribed-ball LP over
/// `(y, r)` has inequality rows only.
fn facet_point(h: &Polyhedron, i: usize) -> Result<Option<Vec<f64>>> {
    let n = h.dim;
    let norm = h.a[i].iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Ok(None);
    }
    let u: Vec<f64> = h.a[i].iter().map(|v| v / norm).collect();
    let p0: Vec<f64> = u.iter().map(|v| v * h.b[i] / norm).collect();
    let basis = orthogonal_basis(&u);
    let m = n - 1;
    let mut lifted = Polyhedron::whole_space(m + 1);
    for (j, (aj, &bj)) in h.a.iter().zip(&h.b).enumerate() {
        if j == i {
            continue;
        }
        let mut row: Vec<f64> = basis
            .iter()
            .map(|e| e.iter().zip(aj).map(|(x, y)| x * y).sum())
            .collect();
        let tangential = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs = bj - aj.iter().zip(&p0).map(|(x, y)| x * y).sum::<f64>();
        let scale = aj.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        if tangential <= 1e-12 * scale {
            // Parallel to the facet: either always satisfied on it or never.
            if rhs < -FEAS_TOL * scale {
                return Ok(None);
            }
            continue;
        }
        row.push(tangential);
        lifted.push(row, rhs);
    }
    let mut r = vec![0.0; m + 1];
    r[m] = 1.0;
    lifted.push(r.clone(), 1e6);
    match lp_solve(&r, &lifted, Sense::Maximize) {
        Ok(sol) if sol.point[m] > 1e-12 => {
            let mut x = p0;
            for (e, &yk) in basis.iter().zip(&sol.point[..m]) {
                for (xi, ei) in x.iter_mut().zip(e) {
                    *xi += yk * ei;
                }
            }
            Ok(Some(x))
        }
        Ok(_) | Err(Error::Infeasible) => Ok(None),
        Err(e) => {
            // The neighbour across this facet is still reached from its own
            // side, so a numerically failed facet costs no coverage.
            log::warn!("rpm: facet {i} skipped: {e}");
            Ok(None)
        }
    }
}

/// Patterns of the cells across every non-domain facet of `built`.
fn neighbours(sliced: &SlicedNet, built: &BuiltCell, domain: &Polyhedron) -> Result<Vec<ActivationPattern>> {
    let h = &built.cell.h;
    let mut out = Vec::new();
    for i in 0..h.num_rows() {
        if built.domain_row[i] {
            continue;
        }
        let Some(p) = facet_point(h, i)? else { continue };
        let mut delta = CROSS_OFFSET;
        for _ in 0..3 {
            let y: Vec<f64> = p.iter().zip(&h.a[i]).map(|(x, a)| x + delta * a).collect();
            if !domain.contains(&y, 0.0) {
                break;
            }
            let pat = activation_pattern(sliced, &y)?;
            if pat != built.cell.pattern {
                out.push(pat);
                break;
            }
            delta *= 10.0;
        }
    }
    Ok(out)
}

/// Pattern of a full-dimensional cell near the domain center. The center
/// itself may sit on neuron hyperplanes, so a few deterministic offsets
/// within the inscribed ball are tried before giving up.
fn seed_pattern(sliced: &SlicedNet, domain: &Polyhedron, c0: &[f64], r0: f64) -> Result<ActivationPattern> {
    let n = c0.len();
    let mut first = None;
    for k in 0..16 {
        let x: Vec<f64> = if k == 0 {
            c0.to_vec()
        } else {
            // Quasi-random directions with shrinking radii.
            let scale = 0.5 * r0 / k as f64;
            (0..n)
                .map(|j| {
                    let u = ((k * (j + 1)) as f64 * 0.618_033_988_749_895).fract();
                    c0[j] + scale * (2.0 * u - 1.0)
                })
                .collect()
        };
        let pat = activation_pattern(sliced, &x)?;
        if build_cell(sliced, &pat, domain)?.is_some() {
            return Ok(pat);
        }
        first.get_or_insert(pat);
    }
    Ok(first.expect("at least one seed attempt"))
}

/// Options for [`enumerate_cells`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Maximum number of cells.
    pub budget: usize,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_CELL_BUDGET,
            jobs: 0,
        }
    }
}

/// Runs `f` on a pool with `jobs` workers (the global pool for 0).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Enumerates every cell of `sliced` inside the bounded `domain`.
///
/// Breadth-first marching from the cell at the domain's Chebyshev center.
/// Each level of the frontier is expanded in parallel; results are merged in
/// frontier order and the final list is sorted by pattern, so the output is
/// independent of the number of workers.
pub fn enumerate_cells(sliced: &SlicedNet, domain: &Polyhedron, opts: EnumerateOptions) -> Result<Vec<AffineCell>> {
    let n = sliced.state_dim;
    if n > MAX_STATE_DIM {
        return Err(Error::Argument(format!(
            "cell enumeration supports state dimension up to {MAX_STATE_DIM}, got {n}"
        )));
    }
    if domain.dim != n {
        return Err(Error::Dimension {
            expected: n,
            found: domain.dim,
        });
    }
    let bb = bounding_box(domain)?;
    if !bb.is_bounded() {
        return Err(Error::Argument("enumeration domain must be bounded".into()));
    }
    let (c0, r0) = chebyshev_center(domain, 1e6)?;
    if !(r0 > MIN_CELL_RADIUS) {
        return Err(Error::Argument("enumeration domain has no interior".into()));
    }

    with_jobs(opts.jobs, || {
        let mut visited: HashSet<ActivationPattern> = HashSet::new();
        let mut cells = Vec::new();
        let seed = seed_pattern(sliced, domain, &c0, r0)?;
        visited.insert(seed.clone());
        let mut frontier = vec![seed];
        while !frontier.is_empty() {
            let expanded: Vec<Result<Option<Expansion>>> = frontier
                .par_iter()
                .map(|pat| {
                    let Some(built) = build_cell(sliced, pat, domain)? else {
                        return Ok(None);
                    };
                    let nbrs = neighbours(sliced, &built, domain)?;
                    Ok(Some((built.cell, nbrs)))
                })
                .collect();
            let mut next = BTreeSet::new();
            for item in expanded {
                let Some((cell, nbrs)) = item? else { continue };
                cells.push(cell);
                if cells.len() > opts.budget {
                    return Err(Error::Budget { limit: opts.budget });
                }
                for p in nbrs {
                    if visited.insert(p.clone()) {
                        next.insert(p);
                    }
                }
            }
            frontier = next.into_iter().collect();
            log::debug!("rpm: {} cells, frontier {}", cells.len(), frontier.len());
        }
        cells.sort_by(|a, b| a.pattern.cmp(&b.pattern));
        Ok(cells)
    })?
}

/// All cells of a network at one time slice, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub system: Option<SystemId>,
    pub t: f64,
    pub state_dim: usize,
    pub domain: Polyhedron,
    pub cells: Vec<AffineCell>,
}

impl Partition {
    /// Slices `net` at `t` and enumerates its cells over `domain`.
    pub fn build(net: &DensityNet, t: f64, domain: &Polyhedron, opts: EnumerateOptions) -> Result<Self> {
        let sliced = slice_net(net, t);
        let cells = enumerate_cells(&sliced, domain, opts)?;
        Ok(Self {
            system: net.system,
            t,
            state_dim: net.state_dim,
            domain: domain.clone(),
            cells,
        })
    }

    /// Indices of the cells whose input region contains `x` (within `tol`).
    pub fn locate(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.h.contains(x, tol))
            .map(|(i, _)| i)
            .collect()
    }

    /// Serializes the partition cache as JSON.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = PartitionFile {
            version: PARTITION_VERSION,
            system: self.system,
            t: self.t,
            state_dim: self.state_dim,
            domain: self.domain.clone(),
            cells: self.cells.iter().map(CellRecord::from).collect(),
        };
        serde_json::to_writer(w, &file).map_err(|e| Error::Io(e.into()))
    }

    /// Parses a partition cache written by [`Partition::write_json`].
    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: Option<u64>,
        }
        let probe: Probe = serde_json::from_slice(bytes).map_err(|e| Error::from_json(&e, bytes))?;
        if probe.version != Some(PARTITION_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: probe.version.unwrap_or(0),
                expected: PARTITION_VERSION,
            });
        }
        let file: PartitionFile = serde_json::from_slice(bytes).map_err(|e| Error::from_json(&e, bytes))?;
        let n = file.state_dim;
        let cells = file
            .cells
            .into_iter()
            .map(|r| r.into_cell(n, file.t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            system: file.system,
            t: file.t,
            state_dim: n,
            domain: file.domain,
            cells,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    version: u64,
    system: Option<SystemId>,
    t: f64,
    state_dim: usize,
    domain: Polyhedron,
    cells: Vec<CellRecord>,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct CellRecord {
    pattern: ActivationPattern,
    A: Vec<Vec<f64>>,
    b: Vec<f64>,
    C: Vec<Vec<f64>>,
    d: Vec<f64>,
    E: Vec<Vec<f64>>,
    f: Vec<f64>,
    z_lo: f64,
    z_hi: f64,
    out_lo: Vec<f64>,
    out_hi: Vec<f64>,
    center: Vec<f64>,
    radius: f64,
    volume: f64,
}

impl From<&AffineCell> for CellRecord {
    fn from(c: &AffineCell) -> Self {
        Self {
            pattern: c.pattern.clone(),
            A: c.h.a.clone(),
            b: c.h.b.clone(),
            C: c.c.clone(),
            d: c.d.clone(),
            E: c.m.a.clone(),
            f: c.m.b.clone(),
            z_lo: c.z_lo,
            z_hi: c.z_hi,
            out_lo: c.out_box.lo.clone(),
            out_hi: c.out_box.hi.clone(),
            center: c.center.clone(),
            radius: c.radius,
            volume: c.volume,
        }
    }
}

impl CellRecord {
    fn into_cell(self, n: usize, t: f64) -> Result<AffineCell> {
        let bad = |m: &str| Error::Parse {
            offset: 0,
            line: 0,
            column: 0,
            message: format!("partition cell: {m}"),
        };
        if self.C.len() != n + 1 || self.C.iter().any(|r| r.len() != n) || self.d.len() != n + 1 {
            return Err(bad("map has wrong shape"));
        }
        if self.out_lo.len() != n + 1 || self.out_hi.len() != n + 1 || self.center.len() != n {
            return Err(bad("box or center has wrong length"));
        }
        let h = Polyhedron::new(self.A, self.b, n).map_err(|_| bad("malformed input cell"))?;
        let m = Polyhedron::new(self.E, self.f, n + 1).map_err(|_| bad("malformed output cell"))?;
        Ok(AffineCell {
            pattern: self.pattern,
            h,
            c: self.C,
            d: self.d,
            m,
            z_lo: self.z_lo,
            z_hi: self.z_hi,
            out_box: HyperRectangle {
                lo: self.out_lo,
                hi: self.out_hi,
            },
            center: self.center,
            radius: self.radius,
            volume: self.volume,
            t,
        })
    }
}
