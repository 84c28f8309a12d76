//! Control-affine dynamics `x' = f1(x) + F2(x) u`, control sets, and the implicit trapezoidal
//! step used by the semi-Lagrangian scheme.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::state_space::MAX_DIM;

/// A named parameter value in a flow's parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

pub type Params = BTreeMap<String, ParamValue>;

/// One viscous Lamb vortex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambVortex {
    pub gamma: f64,
    pub delta: f64,
    pub center: [f64; 2],
}

impl LambVortex {
    /// Velocity induced at `(x, y)`; the analytic limit `0` is used at the center itself.
    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        // (1 - exp(-r^2 / delta^2)) / r^2 stays finite (-> 1/delta^2) as r -> 0.
        let core = -(-r2 / (self.delta * self.delta)).exp_m1() / r2;
        let k = self.gamma * core / (2.0 * PI);
        [-k * dy, k * dx]
    }
}

/// The drift field `f1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Flow {
    Zero {
        dim: usize,
    },
    /// `f1(x) = A x`.
    Linear {
        drift: Vec<Vec<f64>>,
    },
    /// Linear vortex `v(x) = M (x - c)`, normalized as `v / (floor + |v|)`.
    Vortex {
        center: [f64; 2],
        matrix: [[f64; 2]; 2],
        floor: f64,
    },
    LambSum {
        vortices: Vec<LambVortex>,
    },
    /// Time-periodic double gyre with `a(t) = eps sin(omega t)`, `b(t) = 1 - 2 eps sin(omega t)`.
    DoubleGyre {
        theta: f64,
        epsilon: f64,
        omega: f64,
    },
}

impl Flow {
    pub fn dim(&self) -> usize {
        match self {
            Flow::Zero { dim } => *dim,
            Flow::Linear { drift } => drift.len(),
            Flow::Vortex { .. } | Flow::LambSum { .. } | Flow::DoubleGyre { .. } => 2,
        }
    }

    pub fn is_time_varying(&self) -> bool {
        matches!(self, Flow::DoubleGyre { .. })
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            Flow::Zero { dim } => out[..*dim].fill(0.0),
            Flow::Linear { drift } => {
                for (r, row) in drift.iter().enumerate() {
                    out[r] = row.iter().zip(x).map(|(a, v)| a * v).sum();
                }
            }
            Flow::Vortex {
                center,
                matrix,
                floor,
            } => {
                let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                let vx = matrix[0][0] * dx + matrix[0][1] * dy;
                let vy = matrix[1][0] * dx + matrix[1][1] * dy;
                let scale = 1.0 / (floor + (vx * vx + vy * vy).sqrt());
                out[0] = vx * scale;
                out[1] = vy * scale;
            }
            Flow::LambSum { vortices } => {
                out[0] = 0.0;
                out[1] = 0.0;
                for v in vortices {
                    let [a, b] = v.velocity(x[0], x[1]);
                    out[0] += a;
                    out[1] += b;
                }
            }
            Flow::DoubleGyre {
                theta,
                epsilon,
                omega,
            } => {
                let s = (omega * t).sin();
                let a = epsilon * s;
                let b = 1.0 - 2.0 * epsilon * s;
                let phase = PI * (a * x[0] * x[0] + b * x[0]);
                out[0] = -theta * PI * phase.sin() * (PI * x[1]).cos();
                out[1] = theta * PI * (2.0 * a * x[0] + b) * phase.cos() * (PI * x[1]).sin();
            }
        }
    }
}

/// The steering matrix `F2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Steering {
    /// Full actuation: `F2 = I`.
    Identity(usize),
    Matrix(Vec<Vec<f64>>),
}

impl Steering {
    pub fn control_dim(&self) -> usize {
        match self {
            Steering::Identity(m) => *m,
            Steering::Matrix(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Steering::Identity(m) => out[..*m].copy_from_slice(&u[..*m]),
            Steering::Matrix(rows) => {
                for (r, row) in rows.iter().enumerate() {
                    out[r] = row.iter().zip(u).map(|(a, v)| a * v).sum();
                }
            }
        }
    }
}

/// Control-affine dynamics, optionally augmented with a periodic time coordinate as the last
/// state axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    flow: Flow,
    steering: Steering,
    time_period: Option<f64>,
}

impl DynamicsModel {
    pub fn new(flow: Flow, steering: Steering) -> Result<Self> {
        let n = flow.dim();
        if n == 0 || n > MAX_DIM {
            return config(format!("flow dimension {n} unsupported"));
        }
        match &steering {
            Steering::Identity(m) if *m != n => {
                return config("identity steering must match the flow dimension")
            }
            Steering::Matrix(rows)
                if rows.len() != n
                    || rows.iter().any(|r| r.len() != steering.control_dim())
                    || steering.control_dim() == 0 =>
            {
                return config("steering matrix must be n x m with m >= 1")
            }
            _ => {}
        }
        if let Flow::Linear { drift } = &flow {
            if drift.iter().any(|r| r.len() != n) {
                return config("drift matrix must be square");
            }
        }
        Ok(DynamicsModel {
            flow,
            steering,
            time_period: None,
        })
    }

    pub fn flow(&self) -> &Flow {
        &self.flow
    }

    pub fn time_period(&self) -> Option<f64> {
        self.time_period
    }

    /// Spatial dimension (without the augmented time axis).
    pub fn spatial_dim(&self) -> usize {
        self.flow.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.flow.dim() + usize::from(self.time_period.is_some())
    }

    pub fn control_dim(&self) -> usize {
        self.steering.control_dim()
    }

    fn time_of(&self, x: &[f64]) -> f64 {
        if self.time_period.is_some() {
            x[self.flow.dim()]
        } else {
            0.0
        }
    }

    /// `f1(x)` including the unit rate of an augmented time axis.
    pub fn flow_vector(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.flow_into(x, &mut out);
        out
    }

    fn flow_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.flow.dim();
        self.flow.eval(x, self.time_of(x), out);
        if self.time_period.is_some() {
            out[n] = 1.0;
        }
    }

    /// `F2(x)` as a row-major `state_dim x control_dim` matrix (time row zero).
    pub fn steering_matrix(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.flow.dim();
        let m = self.control_dim();
        let mut rows = match &self.steering {
            Steering::Identity(_) => (0..n)
                .map(|r| (0..m).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect(),
            Steering::Matrix(rows) => rows.clone(),
        };
        if self.time_period.is_some() {
            rows.push(vec![0.0; m]);
        }
        rows
    }

    /// `f(x, u) = f1(x) + F2(x) u`, written into `out[..state_dim]`.
    #[inline]
    pub fn velocity_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.flow.dim();
        let mut steer = [0.0; MAX_DIM];
        self.flow_into(x, out);
        self.steering.apply(u, &mut steer);
        for r in 0..n {
            out[r] += steer[r];
        }
    }

    pub fn velocity(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.velocity_into(x, u, &mut out);
        out
    }

    fn wrap_time(&self, x: &mut [f64]) {
        if let Some(p) = self.time_period {
            let n = self.flow.dim();
            x[n] = x[n].rem_euclid(p);
            if x[n] >= p {
                x[n] = 0.0;
            }
        }
    }
}

/// Adds a time coordinate advancing at unit rate and wrapping modulo `period`.
pub fn augment_time(model: &DynamicsModel, period: f64) -> Result<DynamicsModel> {
    if !(period > 0.0 && period.is_finite()) {
        return config("time period must be positive and finite");
    }
    if model.time_period.is_some() {
        return config("model already carries a time coordinate");
    }
    if model.flow.dim() + 1 > MAX_DIM {
        return config("augmented state exceeds the supported dimension");
    }
    Ok(DynamicsModel {
        time_period: Some(period),
        ..model.clone()
    })
}

/// Result of one trapezoidal step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    /// The implicit solve did not converge and an explicit Heun step was taken instead.
    pub approximate: bool,
}

const TRAPEZOID_MAX_ITERS: usize = 50;

/// Implicit trapezoidal step `x1 = x0 + dt/2 (f(x0, u) + f(x1, u))`, solved by fixed-point
/// iteration from the explicit Euler predictor.
pub fn trapezoid_step(model: &DynamicsModel, x: &[f64], u: &[f64], dt: f64) -> Step {
    let mut out = [0.0; MAX_DIM];
    let exact = trapezoid_step_into(model, x, u, dt, &mut out);
    Step {
        state: out[..model.state_dim()].to_vec(),
        approximate: !exact,
    }
}

/// Allocation-free form of [`trapezoid_step`]; returns `false` when the Heun fallback was used.
pub(crate) fn trapezoid_step_into(
    model: &DynamicsModel,
    x: &[f64],
    u: &[f64],
    dt: f64,
    out: &mut [f64; MAX_DIM],
) -> bool {
    let n = model.state_dim();
    let mut f0 = [0.0; MAX_DIM];
    let mut f1 = [0.0; MAX_DIM];
    model.velocity_into(x, u, &mut f0);
    let mut y = [0.0; MAX_DIM];
    for r in 0..n {
        y[r] = x[r] + dt * f0[r];
    }
    let mut converged = false;
    for _ in 0..TRAPEZOID_MAX_ITERS {
        model.velocity_into(&y[..n], u, &mut f1);
        let mut diff: f64 = 0.0;
        let mut size: f64 = 0.0;
        for r in 0..n {
            let next = x[r] + 0.5 * dt * (f0[r] + f1[r]);
            diff = diff.max((next - y[r]).abs());
            size = size.max(next.abs());
            y[r] = next;
        }
        if !diff.is_finite() {
            break;
        }
        if diff <= 1e-10 * (1.0 + size) {
            converged = true;
            break;
        }
    }
    if !converged {
        let mut pred = [0.0; MAX_DIM];
        for r in 0..n {
            pred[r] = x[r] + dt * f0[r];
        }
        model.velocity_into(&pred[..n], u, &mut f1);
        for r in 0..n {
            y[r] = x[r] + 0.5 * dt * (f0[r] + f1[r]);
        }
    }
    model.wrap_time(&mut y[..n]);
    out[..n].copy_from_slice(&y[..n]);
    converged
}

/// Box of admissible controls, optionally discretized per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
}

impl ControlSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Option<Vec<usize>>) -> Result<Self> {
        let c = ControlSet { lo, hi, counts };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return config("control bounds need matching, non-empty lo and hi");
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h)) {
            return config("control bounds require lo <= hi");
        }
        if let Some(c) = &self.counts {
            if c.len() != self.lo.len() || c.contains(&0) {
                return config("control counts need one positive entry per axis");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn half_range(&self, axis: usize) -> f64 {
        0.5 * (self.hi[axis] - self.lo[axis])
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (v, (l, h)) in u.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    /// Same box, discretized with `per_axis` points on every axis.
    pub fn with_counts(&self, per_axis: usize) -> ControlSet {
        ControlSet {
            counts: Some(vec![per_axis; self.dim()]),
            ..self.clone()
        }
    }

    /// Lattice of controls in row-major order (axis 0 slowest).
    pub fn enumerate(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let Some(counts) = &self.counts else {
            return config("control set has no discretization counts");
        };
        let axes: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .map(|(a, &k)| {
                if k == 1 {
                    vec![0.5 * (self.lo[a] + self.hi[a])]
                } else {
                    (0..k)
                        .map(|j| {
                            if j == k - 1 {
                                self.hi[a]
                            } else {
                                self.lo[a] + (self.hi[a] - self.lo[a]) * j as f64 / (k - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// Lattice of controls in fixed row-major order.
pub fn enumerate_controls(set: &ControlSet) -> Result<Vec<Vec<f64>>> {
    set.enumerate()
}

fn take_scalar(params: &mut Params, key: &str, default: f64) -> Result<f64> {
    match params.remove(key) {
        None => Ok(default),
        Some(ParamValue::Scalar(v)) => Ok(v),
        Some(_) => config(format!("parameter `{key}` must be a number")),
    }
}

fn take_vector(params: &mut Params, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
    match params.remove(key) {
        None => Ok(default),
        Some(ParamValue::Vector(v)) => Ok(v),
        Some(_) => config(format!("parameter `{key}` must be a list of numbers")),
    }
}

fn take_matrix(params: &mut Params, key: &str, default: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    match params.remove(key) {
        None => Ok(default),
        Some(ParamValue::Matrix(m)) => Ok(m),
        Some(_) => config(format!("parameter `{key}` must be a matrix")),
    }
}

/// Drift of the 3-D linear benchmark.
pub fn linear_drift_default() -> Vec<Vec<f64>> {
    vec![
        vec![-1.0, 1.2094, 0.6937],
        vec![-1.2094, -1.0, 2.6564],
        vec![-0.6937, -2.6564, -1.0],
    ]
}

/// Steering of the 3-D linear benchmark.
pub fn linear_steering_default() -> Vec<Vec<f64>> {
    vec![
        vec![-0.2415, 0.3971, 0.8855],
        vec![-0.9701, -0.0744, -0.2312],
        vec![-0.0259, -0.9148, 0.4031],
    ]
}

pub const BUILTIN_FLOWS: [&str; 5] = ["zero", "linear", "vortex", "lamb_sum", "double_gyre"];

/// Builds one of the named flows; parameters missing from `params` take their defaults and
/// unknown parameters are rejected.
pub fn builtin_flow(name: &str, params: &Params) -> Result<DynamicsModel> {
    let mut p = params.clone();
    let model = match name {
        "zero" => {
            let dim = take_scalar(&mut p, "dim", 2.0)?;
            if dim.fract() != 0.0 || dim < 1.0 {
                return config("parameter `dim` must be a positive integer");
            }
            let dim = dim as usize;
            DynamicsModel::new(Flow::Zero { dim }, Steering::Identity(dim))?
        }
        "linear" => {
            let drift = take_matrix(&mut p, "drift", linear_drift_default())?;
            let steering = take_matrix(&mut p, "steering", linear_steering_default())?;
            DynamicsModel::new(Flow::Linear { drift }, Steering::Matrix(steering))?
        }
        "vortex" => {
            let c = take_vector(&mut p, "center", vec![0.5, 0.0])?;
            let m = take_matrix(&mut p, "matrix", vec![vec![-1.0, 3.0], vec![-3.0, -1.0]])?;
            let floor = take_scalar(&mut p, "floor", 0.01)?;
            if c.len() != 2 || m.len() != 2 || m.iter().any(|r| r.len() != 2) {
                return config("vortex needs a 2-vector center and a 2x2 matrix");
            }
            DynamicsModel::new(
                Flow::Vortex {
                    center: [c[0], c[1]],
                    matrix: [[m[0][0], m[0][1]], [m[1][0], m[1][1]]],
                    floor,
                },
                Steering::Identity(2),
            )?
        }
        "lamb_sum" => {
            let gammas = take_vector(&mut p, "gammas", vec![-50.0, 50.0, 50.0, 50.0])?;
            let deltas = take_vector(&mut p, "deltas", vec![10.0; 4])?;
            let centers = take_matrix(
                &mut p,
                "centers",
                vec![
                    vec![20.0, 30.0],
                    vec![60.0, 70.0],
                    vec![27.0, 65.0],
                    vec![60.0, 30.0],
                ],
            )?;
            if gammas.len() != deltas.len()
                || gammas.len() != centers.len()
                || centers.iter().any(|c| c.len() != 2)
                || deltas.iter().any(|&d| d <= 0.0)
            {
                return config("lamb_sum needs matching gammas, positive deltas and 2-D centers");
            }
            let vortices = gammas
                .iter()
                .zip(&deltas)
                .zip(&centers)
                .map(|((&gamma, &delta), c)| LambVortex {
                    gamma,
                    delta,
                    center: [c[0], c[1]],
                })
                .collect();
            DynamicsModel::new(Flow::LambSum { vortices }, Steering::Identity(2))?
        }
        "double_gyre" => {
            let theta = take_scalar(&mut p, "theta", 0.1)?;
            let epsilon = take_scalar(&mut p, "epsilon", 0.25)?;
            let omega = take_scalar(&mut p, "omega", 2.0 * PI / 5.0)?;
            DynamicsModel::new(
                Flow::DoubleGyre {
                    theta,
                    epsilon,
                    omega,
                },
                Steering::Identity(2),
            )?
        }
        other => {
            return config(format!(
                "unknown flow `{other}`; expected one of {}",
                BUILTIN_FLOWS.join(", ")
            ))
        }
    };
    if let Some(key) = p.keys().next() {
        return config(format!("unknown parameter `{key}` for flow `{name}`"));
    }
    Ok(model)
}
