//! Structured lattices split into Kuhn simplices.
//!
//! Every lattice cell is divided into `n!` simplices, one per axis permutation: the simplex for
//! permutation `p` walks from the cell's lower corner by unit steps along `p[0], p[1], ...`.
//! A point belongs to the simplex whose permutation sorts its fractional cell coordinates in
//! decreasing order, so location is O(n log n) with no search.

use std::collections::HashMap;

use super::{
    check_goal, Affine, DomainBox, ObstacleSet, SimplicialGrid, Stencil, INSIDE_TOL, MAX_DIM,
    MAX_VERTS,
};
use crate::error::{config, Result};

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    h: f64,
    count: usize,
    periodic: bool,
}

impl Axis {
    fn cells(&self) -> usize {
        if self.periodic {
            self.count
        } else {
            self.count - 1
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Lattice {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    cell_counts: Vec<usize>,
    perms: Vec<Vec<usize>>,
    perm_rank: HashMap<Vec<usize>, usize>,
    split: HashMap<usize, Vec<(usize, Affine)>>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for a in 0..used.len() {
            if !used[a] {
                used[a] = true;
                prefix.push(a);
                rec(prefix, used, out);
                prefix.pop();
                used[a] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

impl Lattice {
    fn point_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    fn cell_linear(&self, cell: &[usize]) -> usize {
        cell.iter()
            .zip(&self.cell_counts)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Vertex point indices of the Kuhn simplex `perm` in `cell`.
    fn simplex_vertices(&self, cell: &[usize], perm: &[usize]) -> Vec<usize> {
        let mut idx = cell.to_vec();
        let mut verts = Vec::with_capacity(perm.len() + 1);
        verts.push(self.point_index(&idx));
        for &a in perm {
            idx[a] = (idx[a] + 1) % self.axes[a].count;
            verts.push(self.point_index(&idx));
        }
        verts
    }

    pub(super) fn locate(&self, x: &[f64], simplices: &[u32]) -> Option<Stencil> {
        let n = self.axes.len();
        let mut cell = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for (a, ax) in self.axes.iter().enumerate() {
            if ax.periodic {
                let period = ax.h * ax.count as f64;
                let t = (x[a] - ax.lo).rem_euclid(period) / ax.h;
                let c = (t.floor() as usize).min(ax.count - 1);
                cell[a] = c;
                frac[a] = (t - c as f64).clamp(0.0, 1.0);
            } else {
                let t = (x[a] - ax.lo) / ax.h;
                let last = (ax.count - 1) as f64;
                if t < -1e-9 || t > last + 1e-9 {
                    return None;
                }
                let c = (t.floor().max(0.0) as usize).min(ax.count - 2);
                cell[a] = c;
                frac[a] = (t - c as f64).clamp(0.0, 1.0);
            }
        }
        let mut perm = [0usize; MAX_DIM];
        for (a, p) in perm.iter_mut().enumerate().take(n) {
            *p = a;
        }
        perm[..n].sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
        let perm = &perm[..n];

        if !self.split.is_empty() {
            let sid = self.cell_linear(&cell[..n]) * self.perms.len() + self.perm_rank[perm];
            if let Some(children) = self.split.get(&sid) {
                return locate_in_children(children, n, x, simplices);
            }
        }

        let mut weights = [0.0; MAX_VERTS];
        weights[0] = 1.0 - frac[perm[0]];
        for k in 1..n {
            weights[k] = frac[perm[k - 1]] - frac[perm[k]];
        }
        weights[n] = frac[perm[n - 1]];
        let verts = self.simplex_vertices(&cell[..n], perm);
        Some(Stencil::from_parts(&verts, &weights[..=n]))
    }
}

fn locate_in_children(
    children: &[(usize, Affine)],
    n: usize,
    x: &[f64],
    simplices: &[u32],
) -> Option<Stencil> {
    let nv = n + 1;
    let mut best: Option<(f64, usize, [f64; MAX_VERTS])> = None;
    for &(s, aff) in children {
        let w = aff.weights(n, x);
        let min_w = w[..nv].iter().cloned().fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(b, _, _)| min_w > b) {
            best = Some((min_w, s, w));
        }
        if min_w >= -INSIDE_TOL {
            break;
        }
    }
    let (_, s, w) = best?;
    let verts: Vec<usize> = simplices[s * nv..(s + 1) * nv]
        .iter()
        .map(|&v| v as usize)
        .collect();
    Some(Stencil::from_parts(&verts, &w[..nv]))
}

pub(super) fn build(
    domain: &DomainBox,
    counts: &[usize],
    periodic: &[bool],
    goal: &[f64],
    obstacles: &ObstacleSet,
) -> Result<SimplicialGrid> {
    domain.validate()?;
    let dim = domain.dim();
    if counts.len() != dim || periodic.len() != dim {
        return config("grid counts and periodic flags need one entry per axis");
    }
    if counts.iter().any(|&c| c < 2) {
        return config("structured grids need at least 2 points per axis");
    }
    check_goal(domain, goal, obstacles)?;
    let column_goal = goal.len() < dim;
    if column_goal && !periodic[goal.len()..].iter().all(|&p| p) {
        return config("a goal may omit only periodic (time) coordinates");
    }

    let axes: Vec<Axis> = (0..dim)
        .map(|a| {
            let span = domain.hi[a] - domain.lo[a];
            let cells = if periodic[a] { counts[a] } else { counts[a] - 1 };
            Axis {
                lo: domain.lo[a],
                h: span / cells as f64,
                count: counts[a],
                periodic: periodic[a],
            }
        })
        .collect();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * counts[a + 1];
    }
    let perms = permutations(dim);
    let perm_rank = perms
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect();
    let cell_counts: Vec<usize> = axes.iter().map(Axis::cells).collect();
    let mut lattice = Lattice {
        axes,
        strides,
        cell_counts,
        perms,
        perm_rank,
        split: HashMap::new(),
    };

    // Points, row-major with axis 0 slowest.
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity((total + 1) * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for (a, ax) in lattice.axes.iter().enumerate() {
            points.push(if !ax.periodic && idx[a] == ax.count - 1 {
                domain.hi[a]
            } else {
                ax.lo + ax.h * idx[a] as f64
            });
        }
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }

    // Simplices: cell-major, permutation-minor, so lattice simplex ids are computable.
    let ncells: usize = lattice.cell_counts.iter().product();
    let mut simplices = Vec::with_capacity(ncells * lattice.perms.len() * (dim + 1));
    let mut cell = vec![0usize; dim];
    for _ in 0..ncells {
        for p in &lattice.perms {
            simplices.extend(
                lattice
                    .simplex_vertices(&cell, p)
                    .into_iter()
                    .map(|v| v as u32),
            );
        }
        for a in (0..dim).rev() {
            cell[a] += 1;
            if cell[a] < lattice.cell_counts[a] {
                break;
            }
            cell[a] = 0;
        }
    }
    let mut alive = vec![true; simplices.len() / (dim + 1)];

    let goal_indices = if column_goal {
        column_goal_indices(&lattice, &points, dim, goal)
    } else {
        vec![insert_goal(
            &mut lattice,
            &mut points,
            &mut simplices,
            &mut alive,
            goal,
        )?]
    };

    let n = points.len() / dim;
    let obstacle: Vec<bool> = (0..n)
        .map(|i| obstacles.contains(&points[i * dim..(i + 1) * dim]))
        .collect();

    SimplicialGrid::assemble(
        dim,
        points,
        simplices,
        alive,
        goal.to_vec(),
        goal_indices,
        obstacle,
        Vec::new(),
        domain.clone(),
        periodic.to_vec(),
        obstacles.clone(),
        Some(lattice),
    )
}

/// Lattice points whose leading coordinates are nearest the goal, across all trailing
/// (periodic) layers. Ties within 1e-9 cells are all included.
fn column_goal_indices(lattice: &Lattice, points: &[f64], dim: usize, goal: &[f64]) -> Vec<usize> {
    let k = goal.len();
    let dist = |p: &[f64]| -> f64 {
        (0..k)
            .map(|a| ((p[a] - goal[a]) / lattice.axes[a].h).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let best = points
        .chunks(dim)
        .map(dist)
        .fold(f64::INFINITY, f64::min);
    points
        .chunks(dim)
        .enumerate()
        .filter(|(_, p)| dist(p) <= best + 1e-9)
        .map(|(i, _)| i)
        .collect()
}

/// Returns the goal's point index, appending it and splitting the simplices that contain it
/// when it is not already a lattice point.
fn insert_goal(
    lattice: &mut Lattice,
    points: &mut Vec<f64>,
    simplices: &mut Vec<u32>,
    alive: &mut Vec<bool>,
    goal: &[f64],
) -> Result<usize> {
    let dim = goal.len();
    let nv = dim + 1;
    let mut nearest = vec![0usize; dim];
    let mut on_lattice = true;
    let mut lo_cells: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for (a, ax) in lattice.axes.iter().enumerate() {
        let t = (goal[a] - ax.lo) / ax.h;
        let r = t.round();
        nearest[a] = (r.max(0.0) as usize).min(ax.count - 1);
        let on_node = (t - r).abs() <= 1e-9;
        on_lattice &= on_node;
        // Cells whose closure holds the goal along this axis.
        let mut cands = Vec::new();
        if on_node {
            let node = nearest[a];
            if node < ax.cells() {
                cands.push(node);
            }
            if node > 0 {
                cands.push(node - 1);
            } else if ax.periodic {
                cands.push(ax.cells() - 1);
            }
        } else {
            cands.push((t.floor().max(0.0) as usize).min(ax.cells() - 1));
        }
        lo_cells.push(cands);
    }
    if on_lattice {
        let gi = lattice.point_index(&nearest);
        points[gi * dim..(gi + 1) * dim].copy_from_slice(goal);
        return Ok(gi);
    }

    let gi = points.len() / dim;
    points.extend_from_slice(goal);

    let mut cells: Vec<Vec<usize>> = vec![Vec::new()];
    for cands in &lo_cells {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                cands.iter().map(move |&c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    let nperm = lattice.perms.len();
    let mut split_any = false;
    for cell in cells {
        for r in 0..nperm {
            let sid = lattice.cell_linear(&cell) * nperm + r;
            let verts: Vec<usize> = simplices[sid * nv..(sid + 1) * nv]
                .iter()
                .map(|&v| v as usize)
                .collect();
            let coords: Vec<&[f64]> = verts
                .iter()
                .map(|&v| &points[v * dim..(v + 1) * dim])
                .collect();
            let Some(aff) = Affine::new(&coords) else {
                continue;
            };
            let w = aff.weights(dim, goal);
            if w[..nv].iter().any(|&x| x < -1e-12) {
                continue;
            }
            let mut children = Vec::new();
            for j in 0..nv {
                if w[j] <= 1e-12 {
                    continue;
                }
                let mut cv = verts.clone();
                cv[j] = gi;
                let ccoords: Vec<&[f64]> =
                    cv.iter().map(|&v| &points[v * dim..(v + 1) * dim]).collect();
                if let Some(caff) = Affine::new(&ccoords) {
                    let cid = alive.len();
                    simplices.extend(cv.iter().map(|&v| v as u32));
                    alive.push(true);
                    children.push((cid, caff));
                }
            }
            alive[sid] = false;
            lattice.split.insert(sid, children);
            split_any = true;
        }
    }
    if !split_any {
        return config("goal could not be located in the lattice");
    }
    Ok(gi)
}
