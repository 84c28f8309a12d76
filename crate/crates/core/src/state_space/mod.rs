//! Simplicial grids over the state space and linear interpolation on them.
//!
//! Two constructions are supported: a structured lattice split into Kuhn simplices (any
//! dimension up to [`MAX_DIM`], optionally periodic along an axis) and an unstructured 2-D
//! point cloud triangulated by Delaunay. Both answer point-location queries with a
//! [`Stencil`]: up to `dim + 1` vertex indices and nonnegative barycentric weights.

mod lattice;
pub mod obstacles;
mod unstructured;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
pub use obstacles::{ObstacleSet, Shape};
pub use unstructured::halton;

/// Largest supported state dimension (including an augmented time axis).
pub const MAX_DIM: usize = 3;
const MAX_VERTS: usize = MAX_DIM + 1;

/// Barycentric weights accepted as "inside" down to this slack.
const INSIDE_TOL: f64 = 1e-10;

/// Interpolation stencil: vertices of the containing simplex and their weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stencil {
    idx: [u32; MAX_VERTS],
    w: [f64; MAX_VERTS],
    len: u8,
}

impl Stencil {
    fn from_parts(vertices: &[usize], weights: &[f64]) -> Self {
        let mut s = Stencil {
            len: vertices.len() as u8,
            ..Default::default()
        };
        let mut total = 0.0;
        for (k, (&v, &w)) in vertices.iter().zip(weights).enumerate() {
            let w = w.max(0.0);
            s.idx[k] = v as u32;
            s.w[k] = w;
            total += w;
        }
        if total > 0.0 && (total - 1.0).abs() > 0.0 {
            for w in &mut s.w[..vertices.len()] {
                *w /= total;
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn apply(&self, field: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len as usize {
            acc += self.w[k] * field[self.idx[k] as usize];
        }
        acc
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(move |k| (self.idx[k] as usize, self.w[k]))
    }

    /// Splits the interpolant at vertex `i`: returns `(weight on i, contribution of others)`.
    #[inline]
    pub(crate) fn split_self(&self, i: usize, field: &[f64]) -> (f64, f64) {
        let mut own = 0.0;
        let mut rest = 0.0;
        for k in 0..self.len as usize {
            let j = self.idx[k] as usize;
            if j == i {
                own += self.w[k];
            } else {
                rest += self.w[k] * field[j];
            }
        }
        (own, rest)
    }
}

/// Axis-aligned box `[lo, hi]` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = DomainBox { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return config("domain lo/hi must be non-empty and of equal length");
        }
        if self.lo.len() > MAX_DIM {
            return config(format!("at most {MAX_DIM} state dimensions are supported"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h)) {
            return config("domain requires lo < hi on every axis");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Closed-box membership on the first `x.len()` axes, with a relative slack of 1e-12.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(a, &v)| {
            let slack = 1e-12 * (self.hi[a] - self.lo[a]);
            v >= self.lo[a] - slack && v <= self.hi[a] + slack
        })
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Affine map from a point to the barycentric coordinates `1..=n` of a simplex.
#[derive(Debug, Clone, Copy)]
struct Affine {
    origin: [f64; MAX_DIM],
    inv: [[f64; MAX_DIM]; MAX_DIM],
}

impl Affine {
    fn new(vertices: &[&[f64]]) -> Option<Affine> {
        let n = vertices.len() - 1;
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        let mut scale: f64 = 0.0;
        for c in 0..n {
            for r in 0..n {
                m[r][c] = vertices[c + 1][r] - vertices[0][r];
                scale = scale.max(m[r][c].abs());
            }
        }
        let inv = invert(m, n, scale)?;
        let mut origin = [0.0; MAX_DIM];
        origin[..n].copy_from_slice(&vertices[0][..n]);
        Some(Affine { origin, inv })
    }

    fn weights(&self, n: usize, x: &[f64]) -> [f64; MAX_VERTS] {
        let mut w = [0.0; MAX_VERTS];
        let mut sum = 0.0;
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += self.inv[r][c] * (x[c] - self.origin[c]);
            }
            w[r + 1] = acc;
            sum += acc;
        }
        w[0] = 1.0 - sum;
        w
    }
}

fn invert(
    mut m: [[f64; MAX_DIM]; MAX_DIM],
    n: usize,
    scale: f64,
) -> Option<[[f64; MAX_DIM]; MAX_DIM]> {
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in inv.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        for c in 0..n {
            m[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..n {
                        m[r][c] -= f * m[col][c];
                        inv[r][c] -= f * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Uniform bucket index over simplex bounding boxes.
#[derive(Debug, Clone)]
struct BucketLocator {
    lo: Vec<f64>,
    cell: Vec<f64>,
    counts: Vec<usize>,
    offsets: Vec<u32>,
    items: Vec<u32>,
    affine: Vec<Option<Affine>>,
}

impl BucketLocator {
    fn build(dim: usize, points: &[f64], simplices: &[u32], alive: &[bool]) -> BucketLocator {
        let nv = dim + 1;
        let nsimp = simplices.len() / nv;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks(dim) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let per_axis = ((nsimp.max(1) as f64).powf(1.0 / dim as f64).ceil() as usize).clamp(1, 512);
        let counts = vec![per_axis; dim];
        let cell: Vec<f64> = (0..dim)
            .map(|a| ((hi[a] - lo[a]) / per_axis as f64).max(f64::MIN_POSITIVE))
            .collect();
        let nbuckets: usize = counts.iter().product();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); nbuckets];
        let mut affine = Vec::with_capacity(nsimp);
        for s in 0..nsimp {
            let verts: Vec<&[f64]> = simplices[s * nv..(s + 1) * nv]
                .iter()
                .map(|&v| &points[v as usize * dim..(v as usize + 1) * dim])
                .collect();
            affine.push(if alive[s] { Affine::new(&verts) } else { None });
            if !alive[s] || affine[s].is_none() {
                continue;
            }
            let mut blo = vec![0usize; dim];
            let mut bhi = vec![0usize; dim];
            for a in 0..dim {
                let (mn, mx) = verts
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), v| {
                        (mn.min(v[a]), mx.max(v[a]))
                    });
                blo[a] = bucket_coord(mn - 1e-12, lo[a], cell[a], counts[a]);
                bhi[a] = bucket_coord(mx + 1e-12, lo[a], cell[a], counts[a]);
            }
            for_each_cell(&blo, &bhi, |cellidx| {
                let lin = linear_index(cellidx, &counts);
                lists[lin].push(s as u32);
            });
        }
        let mut offsets = Vec::with_capacity(nbuckets + 1);
        let mut items = Vec::new();
        offsets.push(0);
        for l in lists {
            items.extend(l);
            offsets.push(items.len() as u32);
        }
        BucketLocator {
            lo,
            cell,
            counts,
            offsets,
            items,
            affine,
        }
    }

    fn locate(&self, dim: usize, simplices: &[u32], x: &[f64]) -> Option<Stencil> {
        let mut cellidx = [0usize; MAX_DIM];
        for a in 0..dim {
            let t = (x[a] - self.lo[a]) / self.cell[a];
            if t < -1e-9 || t > self.counts[a] as f64 + 1e-9 {
                return None;
            }
            cellidx[a] = bucket_coord(x[a], self.lo[a], self.cell[a], self.counts[a]);
        }
        let lin = linear_index(&cellidx[..dim], &self.counts);
        let nv = dim + 1;
        let mut best: Option<(f64, usize, [f64; MAX_VERTS])> = None;
        for &s in &self.items[self.offsets[lin] as usize..self.offsets[lin + 1] as usize] {
            let s = s as usize;
            let Some(aff) = &self.affine[s] else { continue };
            let w = aff.weights(dim, x);
            let min_w = w[..nv].iter().cloned().fold(f64::INFINITY, f64::min);
            if min_w >= -INSIDE_TOL {
                let verts: Vec<usize> = simplices[s * nv..(s + 1) * nv]
                    .iter()
                    .map(|&v| v as usize)
                    .collect();
                return Some(Stencil::from_parts(&verts, &w[..nv]));
            }
            if best.map_or(true, |(b, _, _)| min_w > b) {
                best = Some((min_w, s, w));
            }
        }
        // Points within a rounding error of the hull still count as inside.
        match best {
            Some((min_w, s, w)) if min_w >= -1e-7 => {
                let verts: Vec<usize> = simplices[s * nv..(s + 1) * nv]
                    .iter()
                    .map(|&v| v as usize)
                    .collect();
                Some(Stencil::from_parts(&verts, &w[..nv]))
            }
            _ => None,
        }
    }
}

fn bucket_coord(v: f64, lo: f64, cell: f64, count: usize) -> usize {
    let t = ((v - lo) / cell).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(count - 1)
    }
}

fn linear_index(idx: &[usize], counts: &[usize]) -> usize {
    idx.iter()
        .zip(counts)
        .fold(0, |acc, (&i, &c)| acc * c + i)
}

fn for_each_cell(lo: &[usize], hi: &[usize], mut f: impl FnMut(&[usize])) {
    let dim = lo.len();
    let mut cur = lo.to_vec();
    loop {
        f(&cur);
        let mut a = dim;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            if cur[a] < hi[a] {
                cur[a] += 1;
                for b in a + 1..dim {
                    cur[b] = lo[b];
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Locator {
    Lattice(lattice::Lattice),
    Buckets(BucketLocator),
}

/// A simplicial grid with goal and obstacle marks.
#[derive(Debug, Clone)]
pub struct SimplicialGrid {
    dim: usize,
    points: Vec<f64>,
    simplices: Vec<u32>,
    alive: Vec<bool>,
    goal: Vec<f64>,
    goal_indices: Vec<usize>,
    goal_mask: Vec<bool>,
    obstacle: Vec<bool>,
    boundary_points: Vec<usize>,
    domain: DomainBox,
    periodic: Vec<bool>,
    obstacles: ObstacleSet,
    goal_tol: f64,
    locator: Locator,
}

/// JSON form of a grid, as written by `--dump-grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub points: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
    pub obstacle_flags: Vec<bool>,
    pub goal_index: usize,
    #[serde(default)]
    pub goal_indices: Vec<usize>,
    #[serde(default)]
    pub goal: Vec<f64>,
    #[serde(default)]
    pub boundary_points: Vec<usize>,
    pub domain: DomainBox,
}

/// Structured lattice grid: `counts[a]` points per axis spanning the domain box, or, on
/// periodic axes, `counts[a]` points spanning `[lo, hi)`.
pub fn build_structured_grid(
    domain: &DomainBox,
    counts: &[usize],
    periodic: &[bool],
    goal: &[f64],
    obstacles: &ObstacleSet,
) -> Result<SimplicialGrid> {
    lattice::build(domain, counts, periodic, goal, obstacles)
}

/// Unstructured 2-D grid: box anchors, obstacle boundary samples, the goal and Halton
/// interior points up to `target_count` points in total, triangulated by Delaunay.
pub fn build_unstructured_grid(
    domain: &DomainBox,
    target_count: usize,
    goal: &[f64],
    obstacles: &ObstacleSet,
    boundary_sample_count: usize,
) -> Result<SimplicialGrid> {
    unstructured::build(domain, target_count, goal, obstacles, boundary_sample_count)
}

pub(crate) fn check_goal(domain: &DomainBox, goal: &[f64], obstacles: &ObstacleSet) -> Result<()> {
    if goal.is_empty() || goal.len() > domain.dim() {
        return config("goal must have between 1 and dim coordinates");
    }
    if !domain.contains(goal) {
        return config(format!("goal {goal:?} lies outside the domain"));
    }
    if obstacles.contains(goal) {
        return config(format!("goal {goal:?} lies inside an obstacle"));
    }
    Ok(())
}

impl SimplicialGrid {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        points: Vec<f64>,
        simplices: Vec<u32>,
        alive: Vec<bool>,
        goal: Vec<f64>,
        goal_indices: Vec<usize>,
        obstacle: Vec<bool>,
        boundary_points: Vec<usize>,
        domain: DomainBox,
        periodic: Vec<bool>,
        obstacles: ObstacleSet,
        locator: Option<lattice::Lattice>,
    ) -> Result<SimplicialGrid> {
        let n = points.len() / dim;
        let mut goal_mask = vec![false; n];
        for &g in &goal_indices {
            if obstacle[g] {
                return config("goal point is flagged as an obstacle");
            }
            goal_mask[g] = true;
        }
        let extent = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max);
        let locator = match locator {
            Some(l) => Locator::Lattice(l),
            None => Locator::Buckets(BucketLocator::build(dim, &points, &simplices, &alive)),
        };
        Ok(SimplicialGrid {
            dim,
            points,
            simplices,
            alive,
            goal,
            goal_indices,
            goal_mask,
            obstacle,
            boundary_points,
            domain,
            periodic,
            obstacles,
            goal_tol: 1e-9 * extent,
            locator,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// Live simplices as vertex-index lists.
    pub fn simplices(&self) -> impl Iterator<Item = &[u32]> {
        self.simplices
            .chunks(self.dim + 1)
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s)
    }

    pub fn simplex_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// First goal point.
    pub fn goal_index(&self) -> usize {
        self.goal_indices[0]
    }

    /// All points pinned to the goal value (more than one only for column goals on
    /// time-augmented grids).
    pub fn goal_indices(&self) -> &[usize] {
        &self.goal_indices
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn is_goal_point(&self, i: usize) -> bool {
        self.goal_mask[i]
    }

    pub fn is_obstacle(&self, i: usize) -> bool {
        self.obstacle[i]
    }

    pub fn obstacle_flags(&self) -> &[bool] {
        &self.obstacle
    }

    /// Goal or obstacle points: their values are fixed by boundary conditions.
    pub fn is_pinned(&self, i: usize) -> bool {
        self.goal_mask[i] || self.obstacle[i]
    }

    pub fn boundary_points(&self) -> &[usize] {
        &self.boundary_points
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn obstacles(&self) -> &ObstacleSet {
        &self.obstacles
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    /// Distance from `x` to the goal, over the goal's coordinates only.
    pub fn goal_distance(&self, x: &[f64]) -> f64 {
        self.goal
            .iter()
            .zip(x)
            .map(|(g, v)| (g - v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether `x` coincides with the goal (up to a 1e-9 relative tolerance).
    pub fn is_goal_state(&self, x: &[f64]) -> bool {
        self.goal_distance(x) <= self.goal_tol
    }

    /// Whether `x` leaves the domain on a non-periodic axis or enters an obstacle.
    pub fn is_forbidden_state(&self, x: &[f64]) -> bool {
        let outside = (0..self.dim).any(|a| {
            if self.periodic[a] {
                return false;
            }
            let slack = 1e-12 * (self.domain.hi[a] - self.domain.lo[a]);
            x[a] < self.domain.lo[a] - slack || x[a] > self.domain.hi[a] + slack
        });
        outside || self.obstacles.contains(x)
    }

    /// Locates `x`; `None` outside the domain box or the triangulated region.
    pub fn stencil(&self, x: &[f64]) -> Option<Stencil> {
        assert_eq!(x.len(), self.dim, "query dimension mismatch");
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for a in 0..self.dim {
            if self.periodic[a] {
                continue;
            }
            let slack = 1e-12 * (self.domain.hi[a] - self.domain.lo[a]);
            if x[a] < self.domain.lo[a] - slack || x[a] > self.domain.hi[a] + slack {
                return None;
            }
        }
        match &self.locator {
            Locator::Lattice(l) => l.locate(x, &self.simplices),
            Locator::Buckets(b) => b.locate(self.dim, &self.simplices, x),
        }
    }

    /// Linear interpolation of a per-point field at `x`. Queries outside the domain or the
    /// triangulated region return `1`, the forbidden value.
    pub fn interpolate(&self, field: &[f64], x: &[f64]) -> f64 {
        assert_eq!(field.len(), self.len(), "field length must match point count");
        self.stencil(x).map_or(1.0, |s| s.apply(field))
    }

    /// Longest simplex edge (minimum-image distance along periodic axes).
    pub fn max_spacing(&self) -> f64 {
        let mut longest: f64 = 0.0;
        for s in self.simplices() {
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    longest = longest.max(self.distance(s[i] as usize, s[j] as usize));
                }
            }
        }
        longest
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.point(i), self.point(j));
        (0..self.dim)
            .map(|a| {
                let mut d = (p[a] - q[a]).abs();
                if self.periodic[a] {
                    let period = self.domain.hi[a] - self.domain.lo[a];
                    d = d.min(period - d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_json(&self) -> GridJson {
        GridJson {
            points: self.points().map(<[f64]>::to_vec).collect(),
            simplices: self
                .simplices()
                .map(|s| s.iter().map(|&v| v as usize).collect())
                .collect(),
            obstacle_flags: self.obstacle.clone(),
            goal_index: self.goal_index(),
            goal_indices: self.goal_indices.clone(),
            goal: self.goal.clone(),
            boundary_points: self.boundary_points.clone(),
            domain: self.domain.clone(),
        }
    }

    /// Rebuilds a grid from its JSON form. Obstacle shapes and periodicity are not part of
    /// the export, so the imported grid locates points through its simplices only.
    pub fn from_json(json: &GridJson) -> Result<SimplicialGrid> {
        json.domain.validate()?;
        let dim = json.domain.dim();
        let n = json.points.len();
        if json.points.iter().any(|p| p.len() != dim) {
            return config("every point needs one coordinate per domain axis");
        }
        if json.obstacle_flags.len() != n || json.goal_index >= n {
            return config("obstacle flags or goal index inconsistent with point count");
        }
        let mut simplices = Vec::with_capacity(json.simplices.len() * (dim + 1));
        for s in &json.simplices {
            if s.len() != dim + 1 || s.iter().any(|&v| v >= n) {
                return config("simplex with wrong arity or out-of-range vertex");
            }
            simplices.extend(s.iter().map(|&v| v as u32));
        }
        let goal_indices = if json.goal_indices.is_empty() {
            vec![json.goal_index]
        } else {
            json.goal_indices.clone()
        };
        let goal = if json.goal.is_empty() {
            json.points[json.goal_index].clone()
        } else {
            json.goal.clone()
        };
        let alive = vec![true; json.simplices.len()];
        SimplicialGrid::assemble(
            dim,
            json.points.iter().flatten().copied().collect(),
            simplices,
            alive,
            goal,
            goal_indices,
            json.obstacle_flags.clone(),
            json.boundary_points.clone(),
            json.domain.clone(),
            vec![false; dim],
            ObstacleSet::default(),
            None,
        )
    }
}
