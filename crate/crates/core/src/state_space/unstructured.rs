use delaunator::{triangulate, Point};

use super::{check_goal, DomainBox, ObstacleSet, SimplicialGrid};
use crate::error::{config, Error, Result};

/// Radical inverse of `index` in `base`: the `index`-th element of the 1-D Halton sequence.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

struct Builder {
    points: Vec<[f64; 2]>,
    obstacle: Vec<bool>,
    boundary: Vec<usize>,
}

impl Builder {
    fn push(&mut self, p: [f64; 2], is_obstacle: bool) -> usize {
        self.points.push(p);
        self.obstacle.push(is_obstacle);
        self.points.len() - 1
    }
}

pub(super) fn build(
    domain: &DomainBox,
    target_count: usize,
    goal: &[f64],
    obstacles: &ObstacleSet,
    boundary_sample_count: usize,
) -> Result<SimplicialGrid> {
    domain.validate()?;
    if domain.dim() != 2 {
        return config("unstructured grids are two-dimensional");
    }
    if goal.len() != 2 {
        return config("unstructured grids need a full 2-D goal");
    }
    if target_count <= 3 {
        return config("unstructured grids need more than dim + 1 points");
    }
    check_goal(domain, goal, obstacles)?;
    let boundary_samples = obstacles.sample_boundary(boundary_sample_count);
    let fixed = 1 + boundary_samples.len();
    if fixed > target_count {
        return config(format!(
            "target of {target_count} points cannot hold the goal and {} boundary samples",
            boundary_samples.len()
        ));
    }

    let (lo, hi) = ([domain.lo[0], domain.lo[1]], [domain.hi[0], domain.hi[1]]);
    let spacing = (domain.volume() / target_count as f64).sqrt();

    let mut anchors = vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    for (a, b) in [(lo, [hi[0], lo[1]]), ([hi[0], lo[1]], hi), (hi, [lo[0], hi[1]]), ([lo[0], hi[1]], lo)] {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let k = ((len / spacing).round() as usize).max(1);
        for j in 1..k {
            let t = j as f64 / k as f64;
            anchors.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    anchors.retain(|p| !obstacles.contains(p));
    let use_anchors = fixed + anchors.len() < target_count;

    let mut b = Builder {
        points: Vec::with_capacity(target_count),
        obstacle: Vec::with_capacity(target_count),
        boundary: Vec::new(),
    };
    let goal_pt = [goal[0], goal[1]];
    let goal_index = b.push(goal_pt, false);
    for p in &boundary_samples {
        let i = b.push(*p, true);
        b.boundary.push(i);
    }
    if use_anchors {
        for p in &anchors {
            b.push(*p, false);
        }
    }

    let clearance = 0.3 * spacing;
    let mut index = 0u64;
    let max_draws = 1000 * target_count as u64 + 1000;
    while b.points.len() < target_count {
        index += 1;
        if index > max_draws {
            return config("could not place enough interior points outside the obstacles");
        }
        let p = [
            lo[0] + (hi[0] - lo[0]) * halton(index, 2),
            lo[1] + (hi[1] - lo[1]) * halton(index, 3),
        ];
        if obstacles.contains(&p) {
            continue;
        }
        if !boundary_samples.is_empty() && obstacles.boundary_distance(&p) < clearance {
            continue;
        }
        let dg = ((p[0] - goal_pt[0]).powi(2) + (p[1] - goal_pt[1]).powi(2)).sqrt();
        if dg < clearance {
            continue;
        }
        if use_anchors {
            let edge = (p[0] - lo[0])
                .min(hi[0] - p[0])
                .min(p[1] - lo[1])
                .min(hi[1] - p[1]);
            if edge < clearance {
                continue;
            }
        }
        b.push(p, false);
    }

    let triangles = delaunay_with_retry(&b.points, spacing)?;
    let ntri = triangles.len() / 3;
    let points: Vec<f64> = b.points.iter().flat_map(|p| [p[0], p[1]]).collect();
    let simplices: Vec<u32> = triangles.iter().map(|&v| v as u32).collect();
    SimplicialGrid::assemble(
        2,
        points,
        simplices,
        vec![true; ntri],
        goal.to_vec(),
        vec![goal_index],
        b.obstacle,
        b.boundary,
        domain.clone(),
        vec![false, false],
        obstacles.clone(),
        None,
    )
}

/// Delaunay triangulation with sliver removal. A degenerate input is retried once with a
/// deterministic 1e-9 * spacing jitter.
fn delaunay_with_retry(points: &[[f64; 2]], spacing: f64) -> Result<Vec<usize>> {
    for attempt in 0..2 {
        let pts: Vec<Point> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (dx, dy) = if attempt == 0 {
                    (0.0, 0.0)
                } else {
                    let j = i as u64 + 1;
                    (
                        (halton(j, 5) - 0.5) * 1e-9 * spacing,
                        (halton(j, 7) - 0.5) * 1e-9 * spacing,
                    )
                };
                Point {
                    x: p[0] + dx,
                    y: p[1] + dy,
                }
            })
            .collect();
        let tri = triangulate(&pts);
        let min_area = 1e-8 * spacing * spacing;
        let kept: Vec<usize> = tri
            .triangles
            .chunks(3)
            .filter(|t| {
                let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
                let area =
                    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs() / 2.0;
                area > min_area
            })
            .flatten()
            .copied()
            .collect();
        if !kept.is_empty() {
            return Ok(kept);
        }
    }
    Err(Error::Triangulation(
        "point set is degenerate (collinear or coincident)".into(),
    ))
}
