//! Closed-loop simulation under the feedback `alpha_i = -p_i(x)` and
//! certification of the Nash property against grid best responses.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Player;
use crate::ode::{dopri_step, Tolerance};
use crate::solution::{hj_values, AdmissibleSolution, CostEval, Costs};

/// One sample of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub alpha: [f64; 2],
    /// Undiscounted running costs `h_i(x) + alpha_i^2 / 2`.
    pub running_cost: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopRun {
    pub y: f64,
    pub horizon: f64,
    /// Constant added to each player's feedback control.
    pub bias: [f64; 2],
    pub trajectory: Vec<TrajectoryPoint>,
    pub costs: [f64; 2],
    /// Discounted contribution of `t > T` included in `costs`.
    pub tail: [f64; 2],
    pub settled: Option<Settlement>,
}

impl ClosedLoopRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,alpha1,alpha2,running_cost1,running_cost2")?;
        for s in &self.trajectory {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.t, s.x, s.alpha[0], s.alpha[1], s.running_cost[0], s.running_cost[1]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub bias: [f64; 2],
    pub max_dt: f64,
    pub atol: f64,
    pub rtol: f64,
    /// `|xdot|` below which the state counts as at rest.
    pub rest_speed: f64,
    /// Time the state must stay at rest before the run is closed in form.
    pub rest_time: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            bias: [0.0, 0.0],
            max_dt: 1e-2,
            atol: 1e-12,
            rtol: 1e-10,
            rest_speed: 1e-9,
            rest_time: 1.0,
        }
    }
}

struct Feedback<'a> {
    solution: &'a AdmissibleSolution,
    costs: CostEval,
    bias: [f64; 2],
}

impl Feedback<'_> {
    fn alpha(&self, x: f64) -> Result<[f64; 2]> {
        let p = self.solution.p_at(x).ok_or(Error::WindowEscape { x })?;
        Ok([-p[0] + self.bias[0], -p[1] + self.bias[1]])
    }

    fn speed(&self, x: f64) -> Result<f64> {
        let a = self.alpha(x)?;
        Ok(a[0] + a[1])
    }

    fn point(&self, t: f64, x: f64) -> Result<TrajectoryPoint> {
        let alpha = self.alpha(x)?;
        let h = self.costs.eval_costs(x);
        Ok(TrajectoryPoint {
            t,
            x,
            alpha,
            running_cost: [h[0] + alpha[0] * alpha[0] / 2.0, h[1] + alpha[1] * alpha[1] / 2.0],
        })
    }

    /// Point where the closed-loop field changes sign between `a` and `b`.
    fn switching_point(&self, mut a: f64, mut b: f64) -> Result<f64> {
        let sa = self.speed(a)?.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            if self.speed(m)?.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(b)
    }
}

pub fn simulate_closed_loop(solution: &AdmissibleSolution, y: f64, horizon: f64) -> Result<ClosedLoopRun> {
    simulate_closed_loop_with(solution, y, horizon, &SimulationOptions::default())
}

/// Integrates `xdot = alpha_1 + alpha_2` from `x(0) = y` up to `horizon`.
///
/// Where the field changes sign along a step the state stops at the
/// switching point; a state that stays at rest for `rest_time` is closed in
/// form.
pub fn simulate_closed_loop_with(
    solution: &AdmissibleSolution,
    y: f64,
    horizon: f64,
    opts: &SimulationOptions,
) -> Result<ClosedLoopRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    let fb = Feedback {
        solution,
        costs: solution.costs.evaluator()?,
        bias: opts.bias,
    };
    let tol = Tolerance::new(opts.atol, opts.rtol);
    let rhs = |_t: f64, x: &[f64; 1]| [fb.speed(x[0]).unwrap_or(0.0)];

    let mut t = 0.0;
    let mut x = y;
    let mut traj = vec![fb.point(t, x)?];
    let mut h = opts.max_dt.min(horizon);
    let mut rest_since: Option<f64> = None;
    let mut settled = None;
    let mut stuck = false;

    while t < horizon {
        let v = fb.speed(x)?;
        if stuck || v == 0.0 {
            stuck = true;
        }
        if stuck || v.abs() < opts.rest_speed {
            let since = *rest_since.get_or_insert(t);
            if stuck || t - since >= opts.rest_time {
                settled = Some(Settlement { t, x });
                break;
            }
        } else {
            rest_since = None;
        }
        h = h.min(opts.max_dt).min(horizon - t);
        let step = dopri_step(&rhs, t, &[x], h, &tol);
        if !(step.err <= 1.0) && h > 1e-12 {
            h = tol.next_step(h, step.err.max(1e-300)).max(1e-12);
            continue;
        }
        let mut x_new = step.y[0];
        let mut t_new = t + h;
        // the state is only in the window while the profile is defined there
        if solution.p_at(x_new).is_none() {
            return Err(Error::WindowEscape { x: x_new });
        }
        let v_new = fb.speed(x_new)?;
        if v != 0.0 && v_new != 0.0 && v.signum() != v_new.signum() {
            // the field points back: stop at the switching point
            let xs = fb.switching_point(x, x_new)?;
            t_new = t + h * ((xs - x) / (x_new - x)).clamp(0.0, 1.0);
            x_new = xs;
            stuck = true;
        }
        h = tol.next_step(h, step.err);
        t = t_new;
        x = x_new;
        traj.push(fb.point(t, x)?);
    }

    let tail_mode = if settled.is_some() { Tail::Settled } else { Tail::Extrapolate };
    let mut costs = [0.0; 2];
    let mut tail = [0.0; 2];
    for pl in Player::BOTH {
        let (j, tl) = discounted_cost(&traj, pl, tail_mode)?;
        costs[pl.index()] = j;
        tail[pl.index()] = tl;
    }
    Ok(ClosedLoopRun {
        y,
        horizon,
        bias: opts.bias,
        trajectory: traj,
        costs,
        tail,
        settled,
    })
}

/// How the cost beyond the last sample is accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// The state is at rest: the integrand is constant from the last sample on.
    Settled,
    /// The integrand continues linearly with the slope of the last segment.
    Extrapolate,
}

/// `int_0^inf e^{-t} (h_i(x) + alpha_i^2/2) dt` over the samples with the
/// trapezoid rule, discount weights integrated exactly on each segment.
pub fn evaluate_cost(trajectory: &[TrajectoryPoint], player: Player, tail: Tail) -> Result<f64> {
    discounted_cost(trajectory, player, tail).map(|(j, _)| j)
}

/// Running costs of `samples` recomputed from `costs`, for trajectories not
/// produced by [`simulate_closed_loop`].
pub fn with_running_costs(costs: &Costs, samples: &[(f64, f64, [f64; 2])]) -> Result<Vec<TrajectoryPoint>> {
    let ev = costs.evaluator()?;
    Ok(samples
        .iter()
        .map(|&(t, x, alpha)| {
            let h = ev.eval_costs(x);
            TrajectoryPoint {
                t,
                x,
                alpha,
                running_cost: [h[0] + alpha[0] * alpha[0] / 2.0, h[1] + alpha[1] * alpha[1] / 2.0],
            }
        })
        .collect())
}

fn discounted_cost(trajectory: &[TrajectoryPoint], player: Player, tail: Tail) -> Result<(f64, f64)> {
    let i = player.index();
    let Some(last) = trajectory.last() else {
        return Err(Error::EmptyTrajectory);
    };
    let mut sum = 0.0;
    let mut comp = 0.0;
    for w in trajectory.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        if h <= 0.0 {
            continue;
        }
        let (g0, g1) = (a.running_cost[i], b.running_cost[i]);
        // int_0^h e^{-s} (g0 + (g1 - g0) s / h) ds
        let e = (-h).exp();
        let w0 = -(-h).exp_m1();
        let w1 = (w0 - h * e) / h;
        let term = (-a.t).exp() * (g0 * w0 + (g1 - g0) * w1);
        // Kahan summation
        let yk = term - comp;
        let tk = sum + yk;
        comp = (tk - sum) - yk;
        sum = tk;
    }
    let g = last.running_cost[i];
    let slope = match (tail, trajectory.len()) {
        (Tail::Extrapolate, n) if n >= 2 => {
            let prev = &trajectory[n - 2];
            if last.t > prev.t {
                (g - prev.running_cost[i]) / (last.t - prev.t)
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let tl = (-last.t).exp() * (g + slope);
    Ok((sum + tl, tl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Alternating in-place sweeps, each node solved exactly for its own value.
    GaussSeidel,
    /// Plain fixed-point iteration of the scheme.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub x_lo: f64,
    pub x_hi: f64,
    pub dx: f64,
    pub n_controls: usize,
    /// Control range `[-A, A]`; derived from the opponent and cost slopes
    /// when absent.
    pub control_bound: Option<f64>,
    /// Sup-norm change between sweeps at which iteration stops.
    pub tol: f64,
    pub max_sweeps: usize,
    pub sweep: SweepMode,
    /// Golden-section refinement of the best discrete control.
    pub refine: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            x_lo: -55.0,
            x_hi: 55.0,
            dx: 1e-3,
            n_controls: 401,
            control_bound: None,
            tol: 1e-11,
            max_sweeps: 10_000,
            sweep: SweepMode::GaussSeidel,
            refine: true,
        }
    }
}

impl GridParams {
    pub fn window(x_lo: f64, x_hi: f64, dx: f64) -> Self {
        GridParams {
            x_lo,
            x_hi,
            dx,
            ..GridParams::default()
        }
    }

    /// Reporting window of `solution` widened by 5 on each side, with the
    /// control range sized from the profile.
    pub fn for_solution(solution: &AdmissibleSolution, dx: f64) -> Self {
        let w = solution.admissibility.tolerances.window;
        GridParams {
            x_lo: w[0] - 5.0,
            x_hi: w[1] + 5.0,
            dx,
            control_bound: Some(2.0 * solution.max_abs_p(w) + 1.0),
            ..GridParams::default()
        }
    }

    fn nodes(&self) -> Result<usize> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {}", self.dx)));
        }
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_hi > self.x_lo) {
            return Err(Error::InvalidGrid(format!("empty window [{}, {}]", self.x_lo, self.x_hi)));
        }
        if self.n_controls < 3 {
            return Err(Error::InvalidGrid("at least 3 controls are needed".into()));
        }
        let n = ((self.x_hi - self.x_lo) / self.dx).round() as usize + 1;
        if !(3..=50_000_000).contains(&n) {
            return Err(Error::InvalidGrid(format!("{n} nodes")));
        }
        Ok(n)
    }
}

/// Treatment of feet of characteristics leaving the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Exact value for a linear cost and a constant opponent beyond the edge.
    AsymptoticTail,
    /// Foot clamped to the edge node.
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub player: Player,
    pub x_lo: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub tau: f64,
    pub control_bound: f64,
    pub sweeps: usize,
    /// Sup-norm change of every sweep.
    pub changes: Vec<f64>,
    /// Nodes whose optimal control sits on `+-A` in the final sweep.
    pub control_bound_hits: usize,
    pub boundary: Boundary,
    /// Whether any foot of a characteristic left the window.
    pub boundary_used: bool,
}

impl ValueTable {
    pub fn x_hi(&self) -> f64 {
        self.x_lo + (self.values.len() - 1) as f64 * self.dx
    }

    /// Linear interpolation; `None` outside the window.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        let r = (x - self.x_lo) / self.dx;
        let n = self.values.len();
        if !(r >= -1e-9 && r <= (n - 1) as f64 + 1e-9) {
            return None;
        }
        let r = r.clamp(0.0, (n - 1) as f64);
        let j = (r.floor() as usize).min(n - 2);
        let th = r - j as f64;
        Some((1.0 - th) * self.values[j] + th * self.values[j + 1])
    }
}

struct Scheme<'a> {
    costs: &'a CostEval,
    player: Player,
    x_lo: f64,
    dx: f64,
    tau: f64,
    h: Vec<f64>,
    beta: Vec<f64>,
    controls: Vec<f64>,
    bound: f64,
    refine: bool,
    boundary: Boundary,
    /// Cost slope and opponent control beyond each edge.
    edge: [(f64, f64); 2],
}

impl Scheme<'_> {
    fn x(&self, j: usize) -> f64 {
        self.x_lo + j as f64 * self.dx
    }

    fn outside(&self, z: f64, v: &[f64]) -> f64 {
        let n = v.len();
        let right = z > self.x(n - 1);
        match self.boundary {
            Boundary::Clamp => v[if right { n - 1 } else { 0 }],
            Boundary::AsymptoticTail => {
                let (kappa, beta) = self.edge[right as usize];
                self.costs.eval_cost(self.player, z) - kappa * kappa / 2.0 + kappa * beta
            }
        }
    }

    /// Value at node `j` under control `a`, given the neighbour values; the
    /// node's own value is solved for exactly (Gauss-Seidel) or read from `v`
    /// (Jacobi).
    fn candidate(&self, j: usize, a: f64, v: &[f64], implicit: bool, out: &mut bool) -> f64 {
        let n = v.len();
        let tau = self.tau;
        let c = self.h[j] + a * a / 2.0;
        let b = a + self.beta[j];
        let th = (tau * b / self.dx).abs().min(1.0);
        let nb = if b >= 0.0 { j + 1 } else { j.wrapping_sub(1) };
        if nb >= n {
            *out = true;
            return tau * c + (1.0 - tau) * self.outside(self.x(j) + tau * b, v);
        }
        if implicit {
            (tau * c + (1.0 - tau) * th * v[nb]) / (tau + (1.0 - tau) * th)
        } else {
            tau * c + (1.0 - tau) * ((1.0 - th) * v[j] + th * v[nb])
        }
    }

    /// Minimal value at node `j` and whether the minimizer is on the bound.
    fn solve_node(&self, j: usize, v: &[f64], implicit: bool, out: &mut bool) -> (f64, bool) {
        let mut best = f64::INFINITY;
        let mut k_best = 0;
        for (k, &a) in self.controls.iter().enumerate() {
            let c = self.candidate(j, a, v, implicit, out);
            if c < best {
                best = c;
                k_best = k;
            }
        }
        let m = self.controls.len();
        let mut a_best = self.controls[k_best];
        if self.refine {
            let lo = self.controls[k_best.saturating_sub(1)];
            let hi = self.controls[(k_best + 1).min(m - 1)];
            let (a, val) = golden_min(lo, hi, |a| self.candidate(j, a, v, implicit, &mut false));
            if val < best {
                best = val;
                a_best = a;
                // record boundary use of the refined control too
                self.candidate(j, a, v, implicit, out);
            }
        }
        (best, a_best.abs() >= self.bound * (1.0 - 1e-12))
    }
}

fn golden_min<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, f: F) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Value of `player`'s discounted control problem with the opponent's
/// control frozen to `opponent(x)`, by a semi-Lagrangian scheme for
/// `v = min_a [h_i + a^2/2 + v'(a + beta(x))]`.
pub fn best_response<O>(costs: &Costs, opponent: O, player: Player, grid: &GridParams) -> Result<ValueTable>
where
    O: Fn(f64) -> f64,
{
    let n = grid.nodes()?;
    let ev = costs.evaluator()?;
    let xs: Vec<f64> = (0..n).map(|j| grid.x_lo + j as f64 * grid.dx).collect();
    let beta: Vec<f64> = xs.iter().map(|&x| opponent(x)).collect();
    let h: Vec<f64> = xs.iter().map(|&x| ev.eval_cost(player, x)).collect();
    if beta.iter().chain(&h).any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid("opponent control or cost is not finite on the grid".into()));
    }
    let beta_max = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let bound = match grid.control_bound {
        Some(a) if a > 0.0 && a.is_finite() => a,
        Some(a) => return Err(Error::InvalidGrid(format!("control bound must be positive, got {a}"))),
        None => {
            let kmax = xs.iter().fold(0.0f64, |m, &x| m.max(ev.slopes_at(x)[player.index()].abs()));
            2.0 * kmax.max(beta_max) + 1.0
        }
    };
    let tau = grid.dx / (bound + beta_max);
    let m = grid.n_controls;
    let controls: Vec<f64> = (0..m).map(|k| -bound + 2.0 * bound * k as f64 / (m - 1) as f64).collect();
    let boundary = match costs {
        Costs::Piecewise(_) => Boundary::AsymptoticTail,
        Costs::Periodic(_) => Boundary::Clamp,
    };
    let i = player.index();
    let edge = [
        (ev.slopes_at(xs[0] - 1.0)[i], beta[0]),
        (ev.slopes_at(xs[n - 1] + 1.0)[i], beta[n - 1]),
    ];
    let scheme = Scheme {
        costs: &ev,
        player,
        x_lo: grid.x_lo,
        dx: grid.dx,
        tau,
        h,
        beta,
        controls,
        bound,
        refine: grid.refine,
        boundary,
        edge,
    };

    // start from the cost of standing still
    let mut v: Vec<f64> = (0..n).map(|j| scheme.h[j]).collect();
    let mut changes = Vec::new();
    let mut boundary_used = false;
    for sweep in 0..grid.max_sweeps {
        let mut change = 0.0f64;
        let mut hits = 0;
        match grid.sweep {
            SweepMode::GaussSeidel => {
                let order: Box<dyn Iterator<Item = usize>> =
                    if sweep % 2 == 0 { Box::new(0..n) } else { Box::new((0..n).rev()) };
                for j in order {
                    let (val, hit) = scheme.solve_node(j, &v, true, &mut boundary_used);
                    change = change.max((val - v[j]).abs());
                    v[j] = val;
                    hits += hit as usize;
                }
            }
            SweepMode::Jacobi => {
                let mut next = v.clone();
                for (j, slot) in next.iter_mut().enumerate() {
                    let (val, hit) = scheme.solve_node(j, &v, false, &mut boundary_used);
                    change = change.max((val - v[j]).abs());
                    *slot = val;
                    hits += hit as usize;
                }
                v = next;
            }
        }
        changes.push(change);
        if change <= grid.tol {
            return Ok(ValueTable {
                player,
                x_lo: grid.x_lo,
                dx: grid.dx,
                values: v,
                tau,
                control_bound: bound,
                sweeps: sweep + 1,
                changes,
                control_bound_hits: hits,
                boundary,
                boundary_used,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: grid.max_sweeps,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub player: Player,
    pub y: f64,
    pub nash_cost: f64,
    pub best_response_value: f64,
    /// `nash_cost - best_response_value`.
    pub gap: f64,
    /// Value `u_i(y)` of the candidate solution.
    pub candidate_value: f64,
    pub tolerance: f64,
    pub sweeps: usize,
    pub control_bound_hits: usize,
    pub boundary_used: bool,
    pub warning: Option<String>,
}

impl DeviationReport {
    pub fn within_tolerance(&self) -> bool {
        self.gap.abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationOptions {
    pub horizon: f64,
    pub simulation: SimulationOptions,
    /// Scheme error allowance as a multiple of the pseudo-timestep.
    pub tolerance_factor: f64,
}

impl Default for DeviationOptions {
    fn default() -> Self {
        DeviationOptions {
            horizon: 40.0,
            simulation: SimulationOptions::default(),
            tolerance_factor: 10.0,
        }
    }
}

pub fn deviation_gap(solution: &AdmissibleSolution, y: f64, grid: &GridParams) -> Result<[DeviationReport; 2]> {
    deviation_gap_with(solution, y, grid, &DeviationOptions::default())
}

/// Compares each player's closed-loop cost from `y` with the best response
/// to the other player's (possibly biased) feedback.
pub fn deviation_gap_with(
    solution: &AdmissibleSolution,
    y: f64,
    grid: &GridParams,
    opts: &DeviationOptions,
) -> Result<[DeviationReport; 2]> {
    if !(y > grid.x_lo && y < grid.x_hi) {
        return Err(Error::WindowEscape { x: y });
    }
    let run = simulate_closed_loop_with(solution, y, opts.horizon, &opts.simulation)?;
    let ev = solution.costs.evaluator()?;
    let p_y = solution.p_at(y).ok_or(Error::WindowEscape { x: y })?;
    let u = hj_values(ev.eval_costs(y), p_y);
    let bias = opts.simulation.bias;
    let report = |pl: Player| -> Result<DeviationReport> {
        let j = pl.other().index();
        let opponent = |x: f64| solution.p_at(x).map_or(f64::NAN, |p| -p[j] + bias[j]);
        let table = best_response(&solution.costs, opponent, pl, grid)?;
        let v = table.value_at(y).ok_or(Error::WindowEscape { x: y })?;
        let i = pl.index();
        let gap = run.costs[i] - v;
        let tolerance = opts.tolerance_factor * table.tau;
        let mut warnings = Vec::new();
        if gap > tolerance {
            warnings.push(format!("player {pl} improves by {gap:.3e} through a unilateral deviation"));
        }
        if gap < -tolerance {
            warnings.push(format!("closed-loop cost beats the grid best response by {:.3e}", -gap));
        }
        if table.control_bound_hits > 0 {
            warnings.push(format!("optimal control on the bound at {} nodes", table.control_bound_hits));
        }
        Ok(DeviationReport {
            player: pl,
            y,
            nash_cost: run.costs[i],
            best_response_value: v,
            gap,
            candidate_value: u[i],
            tolerance,
            sweeps: table.sweeps,
            control_bound_hits: table.control_bound_hits,
            boundary_used: table.boundary_used,
            warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
        })
    };
    Ok([report(Player::One)?, report(Player::Two)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostSpec;
    use crate::solution::build_cooperative;

    fn unit_solution() -> AdmissibleSolution {
        build_cooperative(&CostSpec::linear([1.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn linear_run_matches_closed_form() {
        let sol = unit_solution();
        for y in [-2.0, 0.0, 1.0, 5.0] {
            let run = simulate_closed_loop(&sol, y, 40.0).unwrap();
            for j in run.costs {
                assert!((j - (y - 1.5)).abs() < 1e-9, "y={y} J={j}");
            }
            let last = run.trajectory.last().unwrap();
            assert!((last.x - (y - 2.0 * last.t)).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_horizon() {
        let sol = unit_solution();
        assert_eq!(simulate_closed_loop(&sol, 0.0, 0.0).unwrap_err(), Error::InvalidHorizon(0.0));
        assert!(simulate_closed_loop(&sol, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn constant_state_costs_h() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 2.0]).unwrap().to_raw());
        let samples: Vec<_> = (0..=100).map(|k| (k as f64 * 0.1, 3.0, [0.0, 0.0])).collect();
        let tr = with_running_costs(&costs, &samples).unwrap();
        assert!((evaluate_cost(&tr, Player::One, Tail::Settled).unwrap() - 3.0).abs() < 1e-14);
        assert!((evaluate_cost(&tr, Player::Two, Tail::Extrapolate).unwrap() - 6.0).abs() < 1e-14);
        assert_eq!(evaluate_cost(&[], Player::One, Tail::Settled).unwrap_err(), Error::EmptyTrajectory);
    }

    #[test]
    fn linear_state_cost_integral() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 1.0]).unwrap().to_raw());
        let samples: Vec<_> = (0..=37).map(|k| {
            let t = k as f64 * 0.27;
            (t, 2.0 - 2.0 * t, [-1.0, -1.0])
        }).collect();
        let tr = with_running_costs(&costs, &samples).unwrap();
        let j = evaluate_cost(&tr, Player::One, Tail::Extrapolate).unwrap();
        assert!((j - 0.5).abs() < 1e-12, "{j}");
    }

    #[test]
    fn best_response_constant_cost() {
        let flat = Costs::Piecewise(CostSpec::new(vec![], vec![[0.0, 1.0]], [2.0, 0.0]).unwrap().to_raw());
        let grid = GridParams { n_controls: 41, ..GridParams::window(-2.0, 2.0, 1e-2) };
        let t = best_response(&flat, |_| 0.0, Player::One, &grid).unwrap();
        assert!(t.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert_eq!(t.control_bound_hits, 0);
    }

    #[test]
    fn best_response_linear_case_is_first_order() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 1.0]).unwrap().to_raw());
        let err = |dx: f64| {
            let grid = GridParams { control_bound: Some(3.0), ..GridParams::window(-3.0, 3.0, dx) };
            let t = best_response(&costs, |_| -1.0, Player::One, &grid).unwrap();
            (t.value_at(0.5).unwrap() - (0.5 - 1.5)).abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-2, "{e1}");
        assert!(e1 / e2 > 1.8, "{e1} {e2}");
    }

    #[test]
    fn invalid_grid() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 1.0]).unwrap().to_raw());
        for dx in [0.0, -1.0, f64::NAN] {
            let grid = GridParams::window(-1.0, 1.0, dx);
            assert!(matches!(best_response(&costs, |_| 0.0, Player::One, &grid), Err(Error::InvalidGrid(_))));
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 1.0]).unwrap().to_raw());
        let grid = GridParams { sweep: SweepMode::Jacobi, max_sweeps: 3, ..GridParams::window(-1.0, 1.0, 1e-2) };
        assert!(matches!(
            best_response(&costs, |_| -1.0, Player::One, &grid),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn jacobi_contracts() {
        let costs = Costs::Piecewise(CostSpec::linear([1.0, 1.0]).unwrap().to_raw());
        let grid = GridParams {
            sweep: SweepMode::Jacobi,
            max_sweeps: 100_000,
            n_controls: 41,
            refine: false,
            ..GridParams::window(-1.0, 1.0, 0.05)
        };
        let t = best_response(&costs, |_| -1.0, Player::One, &grid).unwrap();
        for w in t.changes.windows(2).take(200) {
            assert!(w[1] <= (1.0 - 0.9 * t.tau) * w[0] + 1e-15, "{w:?}");
        }
        let gs = best_response(&costs, |_| -1.0, Player::One, &GridParams { sweep: SweepMode::GaussSeidel, ..grid }).unwrap();
        assert!(gs.sweeps < t.sweeps);
    }

    #[test]
    fn corrupted_feedback_opens_a_gap() {
        let sol = unit_solution();
        let grid = GridParams { control_bound: Some(3.0), ..GridParams::window(-4.0, 4.0, 1e-2) };
        let opts = DeviationOptions {
            simulation: SimulationOptions { bias: [-0.3, 0.0], ..SimulationOptions::default() },
            ..DeviationOptions::default()
        };
        let [r1, _] = deviation_gap_with(&sol, 1.0, &grid, &opts).unwrap();
        assert!((r1.nash_cost - (1.0 - 1.455)).abs() < 1e-9);
        assert!((r1.gap - 0.045).abs() < 0.01, "{}", r1.gap);
        assert!(r1.warning.is_some());
        let [c1, c2] = deviation_gap(&sol, 1.0, &grid).unwrap();
        assert!(c1.within_tolerance() && c2.within_tolerance(), "{c1:?} {c2:?}");
        assert!(deviation_gap(&sol, 9.0, &grid).is_err());
    }
}
