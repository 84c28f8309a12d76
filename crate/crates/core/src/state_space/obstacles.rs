use serde::{Deserialize, Serialize};

/// Distance below which a point counts as lying on a shape boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// A forbidden region. Polygons live in the first two state coordinates; boxes constrain the
/// first `lo.len()` coordinates and leave the rest free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Polygon { vertices: Vec<[f64; 2]> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Shape {
    /// Strict interior membership; points on the boundary are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Polygon { vertices } => {
                if x.len() < 2 || vertices.len() < 3 {
                    return false;
                }
                let p = [x[0], x[1]];
                even_odd(vertices, p) && polygon_boundary_distance(vertices, p) > BOUNDARY_TOL
            }
            Shape::Box { lo, hi } => {
                lo.len() <= x.len()
                    && lo
                        .iter()
                        .zip(hi)
                        .zip(x)
                        .all(|((&l, &h), &v)| v > l + BOUNDARY_TOL && v < h - BOUNDARY_TOL)
            }
        }
    }

    /// Euclidean distance from `x` (restricted to the shape's coordinates) to the boundary.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Polygon { vertices } => polygon_boundary_distance(vertices, [x[0], x[1]]),
            Shape::Box { lo, hi } => {
                let inside = lo
                    .iter()
                    .zip(hi)
                    .zip(x)
                    .all(|((&l, &h), &v)| v >= l && v <= h);
                if inside {
                    lo.iter()
                        .zip(hi)
                        .zip(x)
                        .map(|((&l, &h), &v)| (v - l).min(h - v))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    lo.iter()
                        .zip(hi)
                        .zip(x)
                        .map(|((&l, &h), &v)| {
                            let d = if v < l {
                                l - v
                            } else if v > h {
                                v - h
                            } else {
                                0.0
                            };
                            d * d
                        })
                        .sum::<f64>()
                        .sqrt()
                }
            }
        }
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.boundary_distance(x) <= BOUNDARY_TOL
    }

    /// Perimeter of the planar outline (boxes use their first two axes).
    pub fn perimeter(&self) -> f64 {
        let outline = self.outline();
        let n = outline.len();
        (0..n)
            .map(|i| dist2(outline[i], outline[(i + 1) % n]))
            .sum()
    }

    /// `count` points spread uniformly by arc length along the planar outline, starting at the
    /// first vertex.
    pub fn sample_boundary(&self, count: usize) -> Vec<[f64; 2]> {
        let outline = self.outline();
        let n = outline.len();
        if count == 0 || n == 0 {
            return Vec::new();
        }
        let perimeter = self.perimeter();
        let step = perimeter / count as f64;
        let mut samples = Vec::with_capacity(count);
        let mut edge = 0;
        let mut edge_start = 0.0;
        for k in 0..count {
            let s = k as f64 * step;
            loop {
                let len = dist2(outline[edge], outline[(edge + 1) % n]);
                if s <= edge_start + len || edge == n - 1 {
                    let a = outline[edge];
                    let b = outline[(edge + 1) % n];
                    let t = if len > 0.0 {
                        ((s - edge_start) / len).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    samples.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    break;
                }
                edge_start += len;
                edge += 1;
            }
        }
        samples
    }

    fn outline(&self) -> Vec<[f64; 2]> {
        match self {
            Shape::Polygon { vertices } => vertices.clone(),
            Shape::Box { lo, hi } => vec![
                [lo[0], lo[1]],
                [hi[0], lo[1]],
                [hi[0], hi[1]],
                [lo[0], hi[1]],
            ],
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn even_odd(vertices: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist2([a[0] + t * dx, a[1] + t * dy], p)
}

fn polygon_boundary_distance(vertices: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| segment_distance(vertices[i], vertices[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

/// The forbidden regions of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObstacleSet {
    pub shapes: Vec<Shape>,
}

impl ObstacleSet {
    pub fn new(shapes: Vec<Shape>) -> Self {
        ObstacleSet { shapes }
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.shapes.iter().any(|s| s.contains(x))
    }

    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.shapes
            .iter()
            .map(|s| s.boundary_distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Splits `total` samples over the shapes in proportion to their perimeters (largest
    /// remainder, ties to the earlier shape) and samples each outline.
    pub fn sample_boundary(&self, total: usize) -> Vec<[f64; 2]> {
        if self.shapes.is_empty() || total == 0 {
            return Vec::new();
        }
        let perims: Vec<f64> = self.shapes.iter().map(Shape::perimeter).collect();
        let sum: f64 = perims.iter().sum();
        let exact: Vec<f64> = perims.iter().map(|p| total as f64 * p / sum).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut remaining = total - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            counts[i] += 1;
            remaining -= 1;
        }
        self.shapes
            .iter()
            .zip(counts)
            .flat_map(|(s, c)| s.sample_boundary(c))
            .collect()
    }
}
