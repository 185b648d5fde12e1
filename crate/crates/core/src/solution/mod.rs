//! Admissible solutions: piecewise gradient profiles, value reconstruction,
//! admissibility checks and the builders for each regime.

mod cooperative;
mod extra;
mod family;
mod nonexistence;
mod serde_float;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use cooperative::{build_cooperative, build_cooperative_with, gamma_box, in_gamma_box, GammaBox};
pub use extra::{build_conflicting_extra, build_conflicting_extra_with, build_periodic, build_periodic_with, PeriodicCosts, PeriodicSpec};
pub use family::{
    build_conflicting_family, build_conflicting_family_with, build_mixed_family, build_mixed_family_with, mixed_bounds,
    FamilyOptions,
};
pub use nonexistence::{certify_nonexistence, probe_points, NonexistenceCertificate, ProbeOutcome, ProbeRecord};

use crate::error::{Error, Result};
use crate::model::{classify_regime, CostSpec, Player, RawCostSpec, Regime, RegimeReport};
use crate::orbit::Orbit;
use crate::phase::gradient_slope;

/// Piece boundaries closer than this are considered coincident.
const JOINT_TOL: f64 = 1e-9;
/// Profile discontinuities larger than this are reported as jump points.
pub const JUMP_DETECT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub residual: f64,
    pub jump: f64,
    pub window: [f64; 2],
    /// Spacing of the uniform grid laid over constant pieces.
    pub grid_dx: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-6,
            jump: 1e-8,
            window: [-50.0, 50.0],
            grid_dx: 1e-3,
        }
    }
}

/// Sample of a gradient profile in the physical variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x: f64,
    #[serde(with = "serde_float::single")]
    pub s: f64,
    pub p: [f64; 2],
    /// `dp/dx`; not finite at the origin.
    #[serde(with = "serde_float::pair")]
    pub dpdx: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Piece {
    /// `p` constant on `[x_lo, x_hi[`; either end may be infinite.
    Constant {
        p: [f64; 2],
        #[serde(with = "serde_float::single")]
        x_lo: f64,
        #[serde(with = "serde_float::single")]
        x_hi: f64,
    },
    /// Orbit fragment, samples increasing in `x`.
    Sampled {
        slopes: [f64; 2],
        termination: String,
        samples: Vec<ProfileSample>,
    },
}

impl Piece {
    pub fn x_lo(&self) -> f64 {
        match self {
            Piece::Constant { x_lo, .. } => *x_lo,
            Piece::Sampled { samples, .. } => samples[0].x,
        }
    }

    pub fn x_hi(&self) -> f64 {
        match self {
            Piece::Constant { x_hi, .. } => *x_hi,
            Piece::Sampled { samples, .. } => samples[samples.len() - 1].x,
        }
    }

    pub fn first_p(&self) -> [f64; 2] {
        match self {
            Piece::Constant { p, .. } => *p,
            Piece::Sampled { samples, .. } => samples[0].p,
        }
    }

    pub fn last_p(&self) -> [f64; 2] {
        match self {
            Piece::Constant { p, .. } => *p,
            Piece::Sampled { samples, .. } => samples[samples.len() - 1].p,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Piece::Constant { .. })
    }

    /// Profile value at `x` (clamped to the piece).
    pub fn eval(&self, x: f64) -> [f64; 2] {
        match self {
            Piece::Constant { p, .. } => *p,
            Piece::Sampled { samples, .. } => eval_samples(samples, x),
        }
    }

    /// Builds a sampled piece from an orbit whose `x` has been anchored.
    /// Orbit samples are reordered by increasing `x`; an origin endpoint is
    /// appended at `origin_limit_x` when the orbit is attached to the origin.
    pub fn from_orbit(orbit: &Orbit<f64>, origin_end: OriginEnd) -> Piece {
        let k = orbit.slopes.unwrap_or([0.0, 0.0]);
        let mut samples: Vec<ProfileSample> = orbit
            .samples
            .iter()
            .map(|st| ProfileSample {
                x: st.x,
                s: st.s,
                p: st.p,
                dpdx: gradient_slope(st.p, k),
            })
            .collect();
        if let Some(xo) = orbit.origin_limit_x {
            let origin = ProfileSample {
                x: xo,
                s: f64::NAN,
                p: [0.0, 0.0],
                dpdx: [f64::NAN, f64::NAN],
            };
            match origin_end {
                OriginEnd::Start => samples.insert(0, ProfileSample { s: f64::NEG_INFINITY, ..origin }),
                OriginEnd::End => samples.push(ProfileSample { s: f64::INFINITY, ..origin }),
                OriginEnd::None => {}
            }
        }
        if samples.len() > 1 && samples[0].x > samples[samples.len() - 1].x {
            samples.reverse();
        }
        Piece::Sampled {
            slopes: k,
            termination: orbit.termination.tag().to_string(),
            samples,
        }
    }
}

/// Which end of an orbit (in increasing `s`) is attached to the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginEnd {
    Start,
    End,
    None,
}

/// Cubic Hermite interpolation with linear fallback where the derivative is
/// unreliable (near the origin).
fn eval_samples(samples: &[ProfileSample], x: f64) -> [f64; 2] {
    let n = samples.len();
    if n == 1 || x <= samples[0].x {
        return samples[0].p;
    }
    if x >= samples[n - 1].x {
        return samples[n - 1].p;
    }
    let j = samples.partition_point(|s| s.x <= x);
    let (a, b) = (&samples[j - 1], &samples[j]);
    let h = b.x - a.x;
    if h <= 0.0 {
        return b.p;
    }
    let t = (x - a.x) / h;
    let smooth = (0..2).all(|i| {
        a.dpdx[i].is_finite() && b.dpdx[i].is_finite() && a.dpdx[i].abs() * h < 1.0 && b.dpdx[i].abs() * h < 1.0
    });
    let mut out = [0.0; 2];
    for i in 0..2 {
        out[i] = if smooth {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * a.p[i]
                + (t3 - 2.0 * t2 + t) * h * a.dpdx[i]
                + (-2.0 * t3 + 3.0 * t2) * b.p[i]
                + (t3 - t2) * h * b.dpdx[i]
        } else {
            a.p[i] + t * (b.p[i] - a.p[i])
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpPoint {
    pub x: f64,
    pub left: [f64; 2],
    pub right: [f64; 2],
}

/// The stored pieces describe one period `[base, base + period[`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub period: f64,
    pub base: f64,
}

/// Running costs a solution refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Costs {
    Piecewise(RawCostSpec<f64>),
    Periodic(PeriodicCosts),
}

impl Costs {
    pub fn eval(&self, x: f64) -> Result<[f64; 2]> {
        Ok(match self {
            Costs::Piecewise(raw) => CostSpec::new(raw.breakpoints.clone(), raw.slopes.clone(), raw.offsets)?.eval_costs(x),
            Costs::Periodic(pc) => pc.eval_costs(x),
        })
    }

    /// Validated evaluator; avoids re-validating for every point.
    pub fn evaluator(&self) -> Result<CostEval> {
        Ok(match self {
            Costs::Piecewise(raw) => CostEval::Piecewise(CostSpec::new(
                raw.breakpoints.clone(),
                raw.slopes.clone(),
                raw.offsets,
            )?),
            Costs::Periodic(pc) => CostEval::Periodic(*pc),
        })
    }
}

#[derive(Debug, Clone)]
pub enum CostEval {
    Piecewise(CostSpec<f64>),
    Periodic(PeriodicCosts),
}

impl CostEval {
    pub fn eval_costs(&self, x: f64) -> [f64; 2] {
        match self {
            CostEval::Piecewise(s) => s.eval_costs(x),
            CostEval::Periodic(p) => p.eval_costs(x),
        }
    }

    pub fn eval_cost(&self, player: Player, x: f64) -> f64 {
        self.eval_costs(x)[player.index()]
    }

    pub fn slopes_at(&self, x: f64) -> [f64; 2] {
        match self {
            CostEval::Piecewise(s) => s.slopes_at(x),
            CostEval::Periodic(p) => p.slopes_at(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InadmissibleReason {
    Residual,
    Growth,
    Jump,
    /// The jump satisfies the one-sided "either/or" condition but not the
    /// reflected two-player form.
    JumpWeakFormOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Admissible,
    Inadmissible(InadmissibleReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpCheck {
    pub x: f64,
    /// `p1(y+) + p2(y+)`.
    pub right_sum: f64,
    /// `|p(y-) + p(y+)|`.
    pub reflection_error: f64,
    pub passed: bool,
    pub weak_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    #[serde(with = "serde_float::single")]
    pub hj_residual_sup: f64,
    #[serde(with = "serde_float::single")]
    pub growth_constant: f64,
    /// Gradient of the left and right tails; `None` for periodic profiles.
    pub tail_slopes: Option<[[f64; 2]; 2]>,
    pub tails_linear: bool,
    pub jump_checks: Vec<JumpCheck>,
    pub grid_points: usize,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.verdict == Verdict::Admissible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSolution {
    pub regime: Regime,
    pub costs: Costs,
    pub pieces: Vec<Piece>,
    pub jump_points: Vec<JumpPoint>,
    pub periodicity: Option<Periodicity>,
    /// Family datum actually used at `x = 0` (after any shrinking).
    pub datum: Option<[f64; 2]>,
    pub admissibility: AdmissibilityReport,
}

/// One row of the reconstructed profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub x: f64,
    pub p: [f64; 2],
    pub u: [f64; 2],
    pub piece_index: usize,
}

/// Grid point of a profile together with the data needed for quadrature.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    x: f64,
    p: [f64; 2],
    dpdx: [f64; 2],
    piece: usize,
    /// Sample index within a sampled piece.
    sample: Option<usize>,
    /// Period shift (distinguishes equal pieces in different periods).
    period: i64,
}

impl AdmissibleSolution {
    /// Assembles pieces (sorted, contiguous) into a solution, detecting jumps
    /// and running the admissibility check.
    pub fn assemble(
        regime: Regime,
        costs: Costs,
        pieces: Vec<Piece>,
        periodicity: Option<Periodicity>,
        datum: Option<[f64; 2]>,
        tol: &Tolerances,
    ) -> Result<AdmissibleSolution> {
        if pieces.is_empty() {
            return Err(Error::PreconditionViolation("a solution needs at least one piece".into()));
        }
        let mut jump_points = Vec::new();
        for w in pieces.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let gap = (a.x_hi() - b.x_lo()).abs();
            if gap > JOINT_TOL * (1.0 + a.x_hi().abs()) {
                return Err(Error::PreconditionViolation(format!(
                    "pieces are not contiguous at x={} / x={}",
                    a.x_hi(),
                    b.x_lo()
                )));
            }
            let (l, r) = (a.last_p(), b.first_p());
            if (l[0] - r[0]).hypot(l[1] - r[1]) > JUMP_DETECT_TOL {
                jump_points.push(JumpPoint { x: b.x_lo(), left: l, right: r });
            }
        }
        let mut sol = AdmissibleSolution {
            regime,
            costs,
            pieces,
            jump_points,
            periodicity,
            datum,
            admissibility: AdmissibilityReport {
                hj_residual_sup: f64::NAN,
                growth_constant: f64::NAN,
                tail_slopes: None,
                tails_linear: false,
                jump_checks: Vec::new(),
                grid_points: 0,
                tolerances: *tol,
                verdict: Verdict::Inadmissible(InadmissibleReason::Residual),
            },
        };
        sol.admissibility = check_admissibility(&sol, tol)?;
        Ok(sol)
    }

    /// Domain covered by the pieces (infinite ends for symbolic tails).
    pub fn domain(&self) -> (f64, f64) {
        if self.periodicity.is_some() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        (self.pieces[0].x_lo(), self.pieces[self.pieces.len() - 1].x_hi())
    }

    fn reduce(&self, x: f64) -> f64 {
        match self.periodicity {
            Some(per) => per.base + (x - per.base).rem_euclid(per.period),
            None => x,
        }
    }

    fn piece_index_at(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let x = self.reduce(x);
        let i = self.pieces.partition_point(|pc| pc.x_lo() <= x);
        Some(i.saturating_sub(1))
    }

    /// Right limit of the gradient profile at `x`; `None` outside the domain.
    pub fn p_at(&self, x: f64) -> Option<[f64; 2]> {
        self.piece_index_at(x).map(|i| self.pieces[i].eval(self.reduce(x)))
    }

    /// Left limit of the gradient profile at `x`.
    pub fn p_left(&self, x: f64) -> Option<[f64; 2]> {
        let i = self.piece_index_at(x)?;
        let xr = self.reduce(x);
        if i > 0 && self.pieces[i].x_lo() == xr {
            return Some(self.pieces[i - 1].last_p());
        }
        Some(self.pieces[i].eval(xr))
    }

    /// `max |p|` over the given window.
    pub fn max_abs_p(&self, window: [f64; 2]) -> f64 {
        self.grid(window, 1e-2)
            .iter()
            .fold(0.0f64, |m, g| m.max(g.p[0].abs()).max(g.p[1].abs()))
    }

    /// Profile rows on the reporting grid: every sample of sampled pieces and
    /// a uniform grid over constant pieces, restricted to `window`.
    pub fn profile(&self, window: [f64; 2], dx: f64) -> Result<Vec<ProfileRow>> {
        let costs = self.costs.evaluator()?;
        Ok(self
            .grid(window, dx)
            .into_iter()
            .map(|g| ProfileRow {
                x: g.x,
                p: g.p,
                u: hj_values(costs.eval_costs(g.x), g.p),
                piece_index: g.piece,
            })
            .collect())
    }

    fn grid(&self, window: [f64; 2], dx: f64) -> Vec<GridPoint> {
        let (wlo, whi) = (window[0], window[1]);
        let shifts: Vec<(i64, f64)> = match self.periodicity {
            Some(per) => {
                let n0 = ((wlo - per.base) / per.period).floor() as i64 - 1;
                let n1 = ((whi - per.base) / per.period).ceil() as i64 + 1;
                (n0..=n1).map(|n| (n, n as f64 * per.period)).collect()
            }
            None => vec![(0, 0.0)],
        };
        let mut out = Vec::new();
        for (n, shift) in shifts {
            for (ip, piece) in self.pieces.iter().enumerate() {
                match piece {
                    Piece::Constant { p, x_lo, x_hi } => {
                        let lo = (x_lo + shift).max(wlo);
                        let hi = (x_hi + shift).min(whi);
                        if lo > hi {
                            continue;
                        }
                        let push = |out: &mut Vec<GridPoint>, x: f64| {
                            out.push(GridPoint {
                                x,
                                p: *p,
                                dpdx: [0.0, 0.0],
                                piece: ip,
                                sample: None,
                                period: n,
                            })
                        };
                        push(&mut out, lo);
                        let k0 = (lo / dx).floor() as i64 + 1;
                        let mut k = k0;
                        loop {
                            let x = k as f64 * dx;
                            if x >= hi {
                                break;
                            }
                            if x > lo {
                                push(&mut out, x);
                            }
                            k += 1;
                        }
                        if hi > lo {
                            push(&mut out, hi);
                        }
                    }
                    Piece::Sampled { samples, .. } => {
                        for (is, smp) in samples.iter().enumerate() {
                            let x = smp.x + shift;
                            if x >= wlo && x <= whi {
                                out.push(GridPoint {
                                    x,
                                    p: smp.p,
                                    dpdx: smp.dpdx,
                                    piece: ip,
                                    sample: Some(is),
                                    period: n,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Writes `x,p1,p2,u1,u2,piece_index` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, window: [f64; 2], dx: f64) -> io::Result<()> {
        let rows = self
            .profile(window, dx)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        writeln!(w, "x,p1,p2,u1,u2,piece_index")?;
        for r in rows {
            writeln!(w, "{},{},{},{},{},{}", r.x, r.p[0], r.p[1], r.u[0], r.u[1], r.piece_index)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solutions serialize")
    }

    pub fn from_json(text: &str) -> Result<AdmissibleSolution> {
        serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))
    }

    /// Tail gradients at `-inf` and `+inf` for non-periodic profiles.
    pub fn tail_slopes(&self) -> Option<[[f64; 2]; 2]> {
        if self.periodicity.is_some() {
            return None;
        }
        Some([self.pieces[0].first_p(), self.pieces[self.pieces.len() - 1].last_p()])
    }
}

/// `u_i = h_i - p1 p2 - p_i^2 / 2`.
pub fn hj_values(h: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let cross = p[0] * p[1];
    [h[0] - cross - 0.5 * p[0] * p[0], h[1] - cross - 0.5 * p[1] * p[1]]
}

/// Value functions on the solution's reporting grid.
pub fn reconstruct_values(solution: &AdmissibleSolution, window: [f64; 2], dx: f64) -> Result<Vec<ProfileRow>> {
    solution.profile(window, dx)
}

/// Checks the HJ relation, linear growth and the jump conditions.
///
/// The HJ residual compares the algebraic values `h - p1 p2 - p_i^2/2` with
/// an independent primitive of `p` obtained by quadrature along the grid.
pub fn check_admissibility(solution: &AdmissibleSolution, tol: &Tolerances) -> Result<AdmissibilityReport> {
    let costs = solution.costs.evaluator()?;
    let grid = solution.grid(tol.window, tol.grid_dx);

    let mut residual = 0.0f64;
    let mut growth = 0.0f64;
    if let Some(g0) = grid.first() {
        let mut u_int = hj_values(costs.eval_costs(g0.x), g0.p);
        let mut comp = [0.0f64; 2];
        let mut prev = *g0;
        for g in &grid {
            let h = g.x - prev.x;
            if h > 0.0 {
                let inc = increment(&prev, g, h);
                for i in 0..2 {
                    // Kahan summation keeps the long constant stretches exact
                    let y = inc[i] - comp[i];
                    let t = u_int[i] + y;
                    comp[i] = (t - u_int[i]) - y;
                    u_int[i] = t;
                }
            }
            let u = hj_values(costs.eval_costs(g.x), g.p);
            for i in 0..2 {
                residual = residual.max((u[i] - u_int[i]).abs());
                growth = growth.max(u[i].abs() / (1.0 + g.x.abs()));
            }
            prev = *g;
        }
    }

    let tail_slopes = solution.tail_slopes();
    let tails_linear = match solution.periodicity {
        Some(_) => true,
        None => {
            let first = &solution.pieces[0];
            let last = &solution.pieces[solution.pieces.len() - 1];
            first.is_constant()
                && last.is_constant()
                && first.x_lo() == f64::NEG_INFINITY
                && last.x_hi() == f64::INFINITY
        }
    };

    let jump_checks: Vec<JumpCheck> = solution
        .jump_points
        .iter()
        .map(|j| {
            let right_sum = j.right[0] + j.right[1];
            let left_sum = j.left[0] + j.left[1];
            let reflection_error = (j.left[0] + j.right[0]).hypot(j.left[1] + j.right[1]);
            let passed = right_sum <= tol.jump && reflection_error <= tol.jump;
            let weak_form = right_sum <= tol.jump || left_sum >= -tol.jump;
            JumpCheck { x: j.x, right_sum, reflection_error, passed, weak_form }
        })
        .collect();

    let verdict = if !(residual <= tol.residual) {
        Verdict::Inadmissible(InadmissibleReason::Residual)
    } else if !growth.is_finite() || !tails_linear {
        Verdict::Inadmissible(InadmissibleReason::Growth)
    } else if let Some(bad) = jump_checks.iter().find(|c| !c.passed) {
        Verdict::Inadmissible(if bad.weak_form {
            InadmissibleReason::JumpWeakFormOnly
        } else {
            InadmissibleReason::Jump
        })
    } else {
        Verdict::Admissible
    };

    Ok(AdmissibilityReport {
        hj_residual_sup: residual,
        growth_constant: growth,
        tail_slopes,
        tails_linear,
        jump_checks,
        grid_points: grid.len(),
        tolerances: *tol,
        verdict,
    })
}

/// `int p dx` between consecutive grid points.
fn increment(a: &GridPoint, b: &GridPoint, h: f64) -> [f64; 2] {
    let consecutive = a.piece == b.piece
        && a.period == b.period
        && matches!((a.sample, b.sample), (Some(i), Some(j)) if j == i + 1);
    let mut out = [0.0; 2];
    for i in 0..2 {
        let trap = 0.5 * h * (a.p[i] + b.p[i]);
        let corr = h * h / 12.0 * (a.dpdx[i] - b.dpdx[i]);
        out[i] = if consecutive && corr.is_finite() && a.dpdx[i].abs() * h < 1.0 && b.dpdx[i].abs() * h < 1.0 {
            trap + corr
        } else {
            trap
        };
    }
    out
}

/// Default `x` cap per integration step for orbits stored in solutions.
pub(crate) const SAMPLE_DX: f64 = 1e-3;

pub(crate) fn require_regime(spec: &CostSpec<f64>, expected: Regime) -> Result<RegimeReport> {
    let report = classify_regime(spec);
    if report.regime != expected {
        return Err(Error::RegimeMismatch {
            expected: expected.to_string(),
            found: report.regime,
        });
    }
    Ok(report)
}
