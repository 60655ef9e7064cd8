//! Quadrotor model, NMPC tracking controller and path reference generation.
//!
//! State `x = (p, v, φ, θ)`, input `u = (T, φ_ref, θ_ref)` with mass-normalized
//! thrust. Zero yaw; roll tilts thrust towards −y, pitch towards +x.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::toolpath::PrintPath;

pub type StateVec = [f64; 8];
pub type InputVec = [f64; 3];

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("prediction diverged (non-finite cost)")]
    NonFinite,
    #[error("path complete")]
    PathComplete,
    #[error("invalid control configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub p: Vec3,
    pub v: Vec3,
    pub phi: f64,
    pub theta: f64,
}

impl UavState {
    pub fn at_rest(p: Vec3) -> Self {
        Self { p, v: Vec3::ZERO, phi: 0.0, theta: 0.0 }
    }

    pub fn to_array(&self) -> StateVec {
        [self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.phi, self.theta]
    }

    pub fn from_array(x: &StateVec) -> Self {
        Self { p: Vec3::new(x[0], x[1], x[2]), v: Vec3::new(x[3], x[4], x[5]), phi: x[6], theta: x[7] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub phi_ref: f64,
    pub theta_ref: f64,
}

impl ControlInput {
    pub fn hover(g: f64) -> Self {
        Self { thrust: g, phi_ref: 0.0, theta_ref: 0.0 }
    }

    pub fn to_array(&self) -> InputVec {
        [self.thrust, self.phi_ref, self.theta_ref]
    }

    pub fn from_array(u: &InputVec) -> Self {
        Self { thrust: u[0], phi_ref: u[1], theta_ref: u[2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Linear velocity damping per axis (1/s).
    pub damping: [f64; 3],
    pub tau_phi: f64,
    pub tau_theta: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    pub g: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { damping: [0.1, 0.1, 0.2], tau_phi: 0.4, tau_theta: 0.47, k_phi: 1.0, k_theta: 1.0, g: GRAVITY }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidConfig(m.to_string()));
        if self.damping.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("model.damping must be non-negative");
        }
        if !(self.tau_phi > 0.0 && self.tau_theta > 0.0 && self.tau_phi.is_finite() && self.tau_theta.is_finite()) {
            return bad("model.tau_phi and model.tau_theta must be positive");
        }
        if ![self.k_phi, self.k_theta, self.g].iter().all(|v| v.is_finite()) {
            return bad("model gains and gravity must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_x: [f64; 8],
    pub q_u: [f64; 3],
    pub q_du: [f64; 3],
    pub u_min: [f64; 3],
    pub u_max: [f64; 3],
    pub dphi_max: f64,
    pub dtheta_max: f64,
    pub solver_iters: usize,
    /// Initial step of the preconditioned gradient iteration.
    pub step_size: f64,
    /// Distance at which a waypoint counts as reached (m).
    pub accept_radius: f64,
    /// Speed of the reference point along the path (m/s).
    pub ref_speed: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            dt: 0.05,
            q_x: [15.0, 15.0, 25.0, 4.0, 4.0, 4.0, 8.0, 8.0],
            q_u: [3.0, 15.0, 15.0],
            q_du: [3.0, 15.0, 15.0],
            u_min: [3.0, -0.2, -0.2],
            u_max: [15.5, 0.2, 0.2],
            dphi_max: 0.04,
            dtheta_max: 0.04,
            solver_iters: 60,
            step_size: 1.0,
            accept_radius: 0.05,
            ref_speed: 0.1,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("control.horizon must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("control.dt must be positive");
        }
        let weights = self.q_x.iter().chain(&self.q_u).chain(&self.q_du);
        if weights.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("control weights must be non-negative");
        }
        if (0..3).any(|i| !(self.u_min[i] <= self.u_max[i])) {
            return bad("control.u_min must not exceed control.u_max");
        }
        if !(self.dphi_max >= 0.0 && self.dtheta_max >= 0.0) {
            return bad("control rate limits must be non-negative");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("control.step_size must be positive");
        }
        if !(self.accept_radius.is_finite() && self.accept_radius > 0.0) {
            return bad("control.accept_radius must be positive");
        }
        if !(self.ref_speed.is_finite() && self.ref_speed > 0.0) {
            return bad("control.ref_speed must be positive");
        }
        Ok(())
    }
}

pub fn dynamics_derivative(state: &UavState, input: &ControlInput, params: &ModelParams) -> StateVec {
    derivative(&state.to_array(), &input.to_array(), params)
}

pub fn step_euler(state: &UavState, input: &ControlInput, params: &ModelParams, dt: f64) -> UavState {
    UavState::from_array(&euler(&state.to_array(), &input.to_array(), params, dt))
}

fn derivative(x: &StateVec, u: &InputVec, m: &ModelParams) -> StateVec {
    derivative_with(x, &trig(x), u, m)
}

fn derivative_with(x: &StateVec, tr: &[f64; 4], u: &InputVec, m: &ModelParams) -> StateVec {
    let [sp, cp, st, ct] = *tr;
    let t = u[0];
    [
        x[3],
        x[4],
        x[5],
        t * st * cp - m.damping[0] * x[3],
        -t * sp - m.damping[1] * x[4],
        t * ct * cp - m.g - m.damping[2] * x[5],
        (m.k_phi * u[1] - x[6]) / m.tau_phi,
        (m.k_theta * u[2] - x[7]) / m.tau_theta,
    ]
}

fn euler(x: &StateVec, u: &InputVec, m: &ModelParams, dt: f64) -> StateVec {
    let d = derivative(x, u, m);
    std::array::from_fn(|i| x[i] + dt * d[i])
}

/// `(sin φ, cos φ, sin θ, cos θ)` of a state.
fn trig(x: &StateVec) -> [f64; 4] {
    let (sp, cp) = x[6].sin_cos();
    let (st, ct) = x[7].sin_cos();
    [sp, cp, st, ct]
}

/// `λ + dt·(∂f/∂x)ᵀλ` at a state with attitude trig `tr` and thrust `t`.
fn state_adjoint(tr: &[f64; 4], t: f64, m: &ModelParams, dt: f64, l: &StateVec) -> StateVec {
    let [sp, cp, st, ct] = *tr;
    let mut out = *l;
    out[3] += dt * (l[0] - m.damping[0] * l[3]);
    out[4] += dt * (l[1] - m.damping[1] * l[4]);
    out[5] += dt * (l[2] - m.damping[2] * l[5]);
    out[6] += dt * (-t * st * sp * l[3] - t * cp * l[4] - t * ct * sp * l[5] - l[6] / m.tau_phi);
    out[7] += dt * (t * ct * cp * l[3] - t * st * cp * l[5] - l[7] / m.tau_theta);
    out
}

/// `dt·(∂f/∂u)ᵀλ` at a state with attitude trig `tr`.
fn input_adjoint(tr: &[f64; 4], m: &ModelParams, dt: f64, l: &StateVec) -> InputVec {
    let [sp, cp, st, ct] = *tr;
    [
        dt * (st * cp * l[3] - sp * l[4] + ct * cp * l[5]),
        dt * m.k_phi / m.tau_phi * l[6],
        dt * m.k_theta / m.tau_theta * l[7],
    ]
}

/// Tracking targets over the horizon. `states[j]` is the target for the
/// `j+1`-th predicted state; the last entry is held if the list is short.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub states: Vec<StateVec>,
    pub input: InputVec,
}

impl Reference {
    pub fn hold(p: Vec3, g: f64) -> Self {
        Self { states: vec![UavState::at_rest(p).to_array()], input: [g, 0.0, 0.0] }
    }

    fn at(&self, j: usize) -> &StateVec {
        &self.states[j.min(self.states.len() - 1)]
    }
}

fn quad<const D: usize>(q: &[f64; D], a: &[f64; D], b: &[f64; D]) -> f64 {
    (0..D).map(|i| q[i] * (a[i] - b[i]).powi(2)).sum()
}

/// Quadratic tracking, input and input-change cost of the Euler rollout
/// of `inputs` from `state0`; `previous` is the input applied last.
pub fn nmpc_cost(
    state0: &UavState,
    inputs: &[InputVec],
    reference: &Reference,
    previous: &InputVec,
    config: &NmpcConfig,
    params: &ModelParams,
) -> f64 {
    let mut x = state0.to_array();
    let mut prev = previous;
    let mut j_total = 0.0;
    for (j, u) in inputs.iter().enumerate() {
        x = euler(&x, u, params, config.dt);
        j_total += quad(&config.q_x, &x, reference.at(j)) + quad(&config.q_u, u, &reference.input) + quad(&config.q_du, u, prev);
        prev = u;
    }
    j_total
}

/// Cost and its gradient with respect to every input, by a reverse sweep
/// through the rollout.
pub fn nmpc_gradient(
    state0: &UavState,
    inputs: &[InputVec],
    reference: &Reference,
    previous: &InputVec,
    config: &NmpcConfig,
    params: &ModelParams,
) -> (f64, Vec<InputVec>) {
    let n = inputs.len();
    let dt = config.dt;
    let mut xs = Vec::with_capacity(n + 1);
    let mut trigs = Vec::with_capacity(n);
    xs.push(state0.to_array());
    let mut cost = 0.0;
    for (j, u) in inputs.iter().enumerate() {
        let tr = trig(&xs[j]);
        let d = derivative_with(&xs[j], &tr, u, params);
        let x: StateVec = std::array::from_fn(|i| xs[j][i] + dt * d[i]);
        trigs.push(tr);
        let prev = if j == 0 { previous } else { &inputs[j - 1] };
        cost += quad(&config.q_x, &x, reference.at(j)) + quad(&config.q_u, u, &reference.input) + quad(&config.q_du, u, prev);
        xs.push(x);
    }

    let mut grad = vec![[0.0; 3]; n];
    let mut lambda = [0.0; 8];
    for j in (0..n).rev() {
        // λ = ∂J/∂x_{j+1}
        let r = reference.at(j);
        for s in 0..8 {
            lambda[s] += 2.0 * config.q_x[s] * (xs[j + 1][s] - r[s]);
        }
        let u = &inputs[j];
        let prev = if j == 0 { previous } else { &inputs[j - 1] };
        let b = input_adjoint(&trigs[j], params, dt, &lambda);
        for c in 0..3 {
            let mut g = b[c] + 2.0 * config.q_u[c] * (u[c] - reference.input[c]) + 2.0 * config.q_du[c] * (u[c] - prev[c]);
            if j + 1 < n {
                g -= 2.0 * config.q_du[c] * (inputs[j + 1][c] - u[c]);
            }
            grad[j][c] = g;
        }
        lambda = state_adjoint(&trigs[j], u[0], params, dt, &lambda);
    }
    (cost, grad)
}

/// Clamps `inputs` into the input box and the per-step limits on the
/// reference angles, element by element from `previous`.
pub fn project_inputs(inputs: &mut [InputVec], previous: &InputVec, config: &NmpcConfig) {
    let rate = [f64::INFINITY, config.dphi_max, config.dtheta_max];
    let mut prev = *previous;
    for u in inputs.iter_mut() {
        for c in 0..3 {
            let lo = config.u_min[c].max(prev[c] - rate[c]);
            let hi = config.u_max[c].min(prev[c] + rate[c]);
            u[c] = if lo <= hi {
                u[c].clamp(lo, hi)
            } else if prev[c] < config.u_min[c] {
                // previous input outside the box: move towards it at the rate limit
                lo.min(config.u_max[c])
            } else {
                hi.max(config.u_min[c])
            };
        }
        prev = *u;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub input: ControlInput,
    pub cost: f64,
    pub iterations: usize,
}

/// Receding-horizon solver with warm start.
///
/// Projected gradient descent, scaled per input by a diagonal Gauss-Newton
/// curvature of the model linearized at hover, with backtracking on the
/// step length.
#[derive(Debug, Clone)]
pub struct NmpcSolver {
    config: NmpcConfig,
    params: ModelParams,
    scale: Vec<InputVec>,
    guess: Option<Vec<InputVec>>,
}

impl NmpcSolver {
    pub fn new(config: NmpcConfig, params: ModelParams) -> Result<Self, ControlError> {
        config.validate()?;
        params.validate()?;
        let scale = hover_curvature(&config, &params);
        Ok(Self { config, params, scale, guess: None })
    }

    pub fn config(&self) -> &NmpcConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.guess = None;
    }

    /// Optimizes the input sequence and returns its first element.
    pub fn solve(&mut self, state0: &UavState, reference: &Reference, previous: &ControlInput) -> Result<Solution, ControlError> {
        let cfg = &self.config;
        let n = cfg.horizon;
        let prev = previous.to_array();
        let mut u = match self.guess.take() {
            Some(mut g) => {
                g.rotate_left(1);
                g[n - 1] = g[n - 2.min(n - 1)];
                g
            }
            None => vec![prev; n],
        };
        project_inputs(&mut u, &prev, cfg);

        let (mut cost, mut grad) = nmpc_gradient(state0, &u, reference, &prev, cfg, &self.params);
        if !cost.is_finite() {
            return Err(ControlError::NonFinite);
        }
        let mut step = cfg.step_size;
        let mut iterations = 0;
        let mut trial = u.clone();
        while iterations < cfg.solver_iters {
            iterations += 1;
            let mut accepted = false;
            for _ in 0..30 {
                for j in 0..n {
                    for c in 0..3 {
                        trial[j][c] = u[j][c] - step * grad[j][c] / self.scale[j][c];
                    }
                }
                project_inputs(&mut trial, &prev, cfg);
                let decrease: f64 = (0..n).map(|j| (0..3).map(|c| grad[j][c] * (u[j][c] - trial[j][c])).sum::<f64>()).sum();
                if decrease <= 0.0 {
                    break;
                }
                let c_trial = nmpc_cost(state0, &trial, reference, &prev, cfg, &self.params);
                if c_trial <= cost - 1e-4 * decrease {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            std::mem::swap(&mut u, &mut trial);
            let before = cost;
            (cost, grad) = nmpc_gradient(state0, &u, reference, &prev, cfg, &self.params);
            if !cost.is_finite() {
                return Err(ControlError::NonFinite);
            }
            if before - cost <= 1e-10 * (1.0 + before) {
                break;
            }
            step = (step * 2.0).min(cfg.step_size);
        }
        let first = ControlInput::from_array(&u[0]);
        self.guess = Some(u);
        Ok(Solution { input: first, cost, iterations })
    }
}

/// Cold-start solve: the initial guess repeats `previous`.
pub fn nmpc_solve(
    state0: &UavState,
    reference: &Reference,
    previous: &ControlInput,
    config: &NmpcConfig,
    params: &ModelParams,
) -> Result<ControlInput, ControlError> {
    Ok(NmpcSolver::new(config.clone(), params.clone())?.solve(state0, reference, previous)?.input)
}

/// Diagonal of the Gauss-Newton Hessian of the cost for the hover-linearized
/// model.
fn hover_curvature(config: &NmpcConfig, params: &ModelParams) -> Vec<InputVec> {
    let n = config.horizon;
    let dt = config.dt;
    let level = trig(&[0.0; 8]);
    // Adjoint products with unit vectors give the rows of A = ∂x⁺/∂x and B = ∂x⁺/∂u.
    let basis = |s: usize| {
        let mut e = [0.0; 8];
        e[s] = 1.0;
        e
    };
    let b: Vec<InputVec> = (0..8).map(|s| input_adjoint(&level, params, dt, &basis(s))).collect();
    let a_rows: Vec<StateVec> = (0..8).map(|s| state_adjoint(&level, params.g, params, dt, &basis(s))).collect();
    // sensitivity after k steps of free propagation, for each input channel
    let mut sens = vec![[[0.0; 8]; 3]; n];
    for c in 0..3 {
        let mut s: StateVec = std::array::from_fn(|r| b[r][c]);
        for k in 0..n {
            sens[k][c] = s;
            s = std::array::from_fn(|r| (0..8).map(|q| a_rows[r][q] * s[q]).sum());
        }
    }
    (0..n)
        .map(|i| {
            std::array::from_fn(|c| {
                let tracking: f64 =
                    (0..n - i).map(|k| (0..8).map(|s| config.q_x[s] * sens[k][c][s].powi(2)).sum::<f64>()).sum();
                let smooth = if i + 1 < n { 2.0 } else { 1.0 };
                (2.0 * (tracking + config.q_u[c] + smooth * config.q_du[c])).max(1e-9)
            })
        })
        .collect()
}

/// Output of one step of the path follower.
#[derive(Debug, Clone, PartialEq)]
pub struct RefStep {
    pub reference: Reference,
    /// Current reference position.
    pub target: Vec3,
    /// Index of the waypoint being approached.
    pub cursor: usize,
    /// The segment towards `cursor` deposits material.
    pub extrude: bool,
    /// The cursor advanced on this step.
    pub switched: bool,
}

/// Moves a reference point along a path at constant speed, starting from
/// the UAV position. At each waypoint it waits until the UAV is within the
/// acceptance radius before moving on to the next one.
#[derive(Debug, Clone)]
pub struct PathFollower {
    points: Vec<Vec3>,
    extrude: Vec<bool>,
    carrot: Vec3,
    cursor: usize,
    speed: f64,
    accept_radius: f64,
}

impl PathFollower {
    pub fn new(path: &PrintPath, start: Vec3, speed: f64, accept_radius: f64) -> Self {
        Self {
            points: path.waypoints.iter().map(|w| w.position).collect(),
            extrude: path.waypoints.iter().map(|w| w.extrude).collect(),
            carrot: start,
            cursor: 0,
            speed,
            accept_radius,
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Advances the reference point by one control period and returns the
    /// horizon reference for a UAV at `uav`.
    pub fn step(&mut self, uav: Vec3, config: &NmpcConfig, g: f64) -> Result<RefStep, ControlError> {
        if self.cursor >= self.points.len() {
            return Err(ControlError::PathComplete);
        }
        let mut switched = false;
        let target = self.points[self.cursor];
        if (self.carrot - target).norm() < 1e-12 && (uav - target).norm() < self.accept_radius {
            self.cursor += 1;
            switched = true;
            if self.cursor >= self.points.len() {
                return Err(ControlError::PathComplete);
            }
        }
        let extrude = self.extrude[self.cursor];
        self.carrot = self.walk(self.carrot, self.cursor, self.speed * config.dt, false).0;

        // While the reference waits on a waypoint the preview holds there too,
        // otherwise the UAV would settle ahead of it and never arrive.
        let waiting = (self.carrot - self.points[self.cursor]).norm() < 1e-12;
        let mut states = Vec::with_capacity(config.horizon);
        let (mut pos, mut idx) = (self.carrot, self.cursor);
        for _ in 0..config.horizon {
            let (next, next_idx) = self.walk(pos, idx, self.speed * config.dt, !waiting);
            let v = (next - pos) / config.dt;
            states.push([next.x, next.y, next.z, v.x, v.y, v.z, 0.0, 0.0]);
            (pos, idx) = (next, next_idx);
        }
        Ok(RefStep {
            reference: Reference { states, input: [g, 0.0, 0.0] },
            target: self.carrot,
            cursor: self.cursor,
            extrude,
            switched,
        })
    }

    /// Moves `from` by `dist` towards waypoint `idx`, continuing along the
    /// path if `pass` is set and stopping on the waypoint otherwise.
    fn walk(&self, from: Vec3, idx: usize, dist: f64, pass: bool) -> (Vec3, usize) {
        let target = self.points[idx];
        let gap = (target - from).norm();
        if gap <= dist {
            if pass && idx + 1 < self.points.len() {
                return self.walk(target, idx + 1, dist - gap, pass);
            }
            return (target, idx);
        }
        (from + (target - from) * (dist / gap), idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolpath::{Frame, Waypoint};

    fn hover_state() -> UavState {
        UavState::at_rest(Vec3::new(0.0, 0.0, 1.0))
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let d = dynamics_derivative(&hover_state(), &ControlInput::hover(GRAVITY), &ModelParams::default());
        assert_eq!(d, [0.0; 8]);
    }

    #[test]
    fn surplus_thrust_accelerates_up() {
        let d = dynamics_derivative(&hover_state(), &ControlInput { thrust: GRAVITY + 1.0, phi_ref: 0.0, theta_ref: 0.0 }, &ModelParams::default());
        assert!((d[5] - 1.0).abs() < 1e-12);
        assert_eq!(&d[3..5], &[0.0, 0.0]);
    }

    #[test]
    fn pitch_pushes_forward_and_roll_sideways() {
        let params = ModelParams::default();
        let eps = 1e-4;
        let mut s = hover_state();
        s.theta = eps;
        let d = dynamics_derivative(&s, &ControlInput { thrust: GRAVITY, phi_ref: 0.0, theta_ref: eps }, &params);
        assert!(d[3] > 0.0);
        assert!((d[3] - GRAVITY * eps).abs() < 1e-9);
        s.theta = 0.0;
        s.phi = eps;
        let d = dynamics_derivative(&s, &ControlInput { thrust: GRAVITY, phi_ref: eps, theta_ref: 0.0 }, &params);
        assert!(d[4] < 0.0);
    }

    #[test]
    fn damping_step() {
        let mut s = hover_state();
        s.v = Vec3::new(1.0, 0.0, 0.0);
        let next = step_euler(&s, &ControlInput::hover(GRAVITY), &ModelParams::default(), 0.05);
        assert!((next.v.x - 0.995).abs() < 1e-15);
        assert!((next.p.x - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_at_reference() {
        let cfg = NmpcConfig::default();
        let params = ModelParams::default();
        let s = hover_state();
        let u = vec![[GRAVITY, 0.0, 0.0]; cfg.horizon];
        let r = Reference::hold(s.p, GRAVITY);
        assert_eq!(nmpc_cost(&s, &u, &r, &u[0], &cfg, &params), 0.0);
        let mut bumped = u.clone();
        bumped[7][1] = 0.01;
        assert!(nmpc_cost(&s, &bumped, &r, &u[0], &cfg, &params) > 0.0);
    }

    #[test]
    fn projection_respects_box_and_rates() {
        let cfg = NmpcConfig::default();
        let mut u = vec![[20.0, 0.5, -0.5], [0.0, -0.5, 0.5], [9.0, 0.1, 0.1]];
        project_inputs(&mut u, &[9.81, 0.0, 0.0], &cfg);
        assert_eq!(u[0], [15.5, 0.04, -0.04]);
        assert_eq!(u[1][0], 3.0);
        assert!((u[1][1] - 0.0).abs() < 1e-15 && (u[1][2] - 0.0).abs() < 1e-15);
        assert!((u[2][1] - 0.04).abs() < 1e-15 && (u[2][2] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn hover_solution() {
        let cfg = NmpcConfig::default();
        let s = hover_state();
        let u = nmpc_solve(&s, &Reference::hold(s.p, GRAVITY), &ControlInput::hover(GRAVITY), &cfg, &ModelParams::default()).unwrap();
        assert!((u.thrust - GRAVITY).abs() < 1e-3);
        assert!(u.phi_ref.abs() < 1e-3 && u.theta_ref.abs() < 1e-3);
    }

    #[test]
    fn target_ahead_pitches_forward() {
        let cfg = NmpcConfig::default();
        let s = hover_state();
        let r = Reference::hold(s.p + Vec3::new(0.5, 0.0, 0.0), GRAVITY);
        let u = nmpc_solve(&s, &r, &ControlInput::hover(GRAVITY), &cfg, &ModelParams::default()).unwrap();
        assert!(u.theta_ref > 0.0 && u.theta_ref <= 0.2);
        assert!(u.theta_ref <= 0.04 + 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(NmpcConfig { horizon: 0, ..Default::default() }.validate().is_err());
        assert!(NmpcConfig { u_min: [20.0, -0.2, -0.2], ..Default::default() }.validate().is_err());
        assert!(ModelParams { tau_phi: 0.0, ..Default::default() }.validate().is_err());
        assert!(NmpcSolver::new(NmpcConfig { dt: -1.0, ..Default::default() }, ModelParams::default()).is_err());
    }

    fn square() -> PrintPath {
        let w = |x, y, e| Waypoint { position: Vec3::new(x, y, 1.0), extrude: e, feed: None };
        PrintPath {
            waypoints: vec![w(0.0, 0.0, false), w(1.0, 0.0, true), w(1.0, 1.0, true)],
            frame: Frame::UavBody,
            chunk_id: 0,
        }
    }

    #[test]
    fn follower_waits_far_from_target() {
        let cfg = NmpcConfig { horizon: 5, ..Default::default() };
        let mut f = PathFollower::new(&square(), Vec3::new(0.0, 0.0, 1.0), 0.1, 0.05);
        // the first waypoint is the start, so it is reached at once
        let r = f.step(Vec3::new(0.0, 0.0, 1.0), &cfg, GRAVITY).unwrap();
        assert!(r.switched && r.cursor == 1 && r.extrude);
        assert!((r.target - Vec3::new(0.005, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(r.reference.states.len(), 5);
        assert!((r.reference.states[0][3] - 0.1).abs() < 1e-12);

        // the reference stops on the waypoint until the UAV arrives
        for _ in 0..400 {
            f.step(Vec3::new(0.0, 0.0, 1.0), &cfg, GRAVITY).unwrap();
        }
        assert_eq!(f.cursor(), 1);
        let r = f.step(Vec3::new(0.98, 0.0, 1.0), &cfg, GRAVITY).unwrap();
        assert_eq!(r.cursor, 2);
    }

    #[test]
    fn follower_reports_completion() {
        let cfg = NmpcConfig { horizon: 3, ..Default::default() };
        let path = PrintPath { waypoints: vec![Waypoint::travel(Vec3::new(0.01, 0.0, 1.0))], frame: Frame::UavBody, chunk_id: 0 };
        let mut f = PathFollower::new(&path, Vec3::new(0.0, 0.0, 1.0), 0.1, 0.05);
        let r = f.step(Vec3::new(0.0, 0.0, 1.0), &cfg, GRAVITY).unwrap();
        assert!(!r.extrude && !r.switched);
        let r = f.step(Vec3::new(0.0, 0.0, 1.0), &cfg, GRAVITY).unwrap();
        assert!((r.target - Vec3::new(0.01, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(f.step(Vec3::new(0.0, 0.0, 1.0), &cfg, GRAVITY), Err(ControlError::PathComplete));
    }
}
