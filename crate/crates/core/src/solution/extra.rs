//! Constructions through the origin: the extra solution juxtaposing the
//! unstable orbit of `K0` with the stable orbit of `K1`, and its periodic
//! repetition on periodic costs.

use serde::{Deserialize, Serialize};

use super::{require_regime, AdmissibleSolution, Costs, OriginEnd, Periodicity, Piece, Tolerances, SAMPLE_DX};
use crate::error::{Error, Result};
use crate::model::{classify_sector, CostSpec, Regime, Sector};
use crate::orbit::{
    find_crossing, point_on_segment, reconstruct_x, shoot_stable_with, shoot_unstable_with, Orbit, ShootOptions,
    Side, StopConditions, Termination,
};
use crate::phase::{eigen_modulus, PhaseState};

fn shoot_options() -> ShootOptions<f64> {
    ShootOptions {
        epsilon_scale: 1e-6,
        stop: StopConditions {
            s_span: 60.0,
            ..StopConditions::default()
        }
        .with_max_dx(SAMPLE_DX),
    }
}

/// Arcs `[origin, q]` of the unstable orbit of `k0` and `[q, origin]` of
/// the stable orbit of `k1`, both anchored so that `q` sits at `x = b`.
struct Junction {
    unstable: Orbit<f64>,
    stable: Orbit<f64>,
    x_minus: f64,
    x_plus: f64,
}

fn junction(k0: [f64; 2], k1: [f64; 2], b: f64, opts: &ShootOptions<f64>) -> Result<Option<Junction>> {
    let min_radius = 10.0 * opts.epsilon_scale * eigen_modulus(k0).max(eigen_modulus(k1));
    let mut best: Option<(f64, Orbit<f64>, Orbit<f64>, crate::orbit::Crossing<f64>)> = None;
    for su in Side::BOTH {
        let u = shoot_unstable_with(k0, su, opts)?;
        for ss in Side::BOTH {
            let s = shoot_stable_with(k1, ss, opts)?;
            if let Some(c) = find_crossing(&u, &s, min_radius) {
                let r = c.point[0].hypot(c.point[1]);
                if best.as_ref().is_none_or(|(rb, ..)| r < *rb) {
                    best = Some((r, u.clone(), s, c));
                }
            }
        }
    }
    let Some((_, u, s, c)) = best else {
        return Ok(None);
    };

    // unstable arc: origin .. q
    let qu = point_on_segment(&u, c.a_segment, c.a_t);
    let mut uo = u.slice(0, c.a_segment);
    uo.samples.push(PhaseState { p: c.point, ..qu });
    uo.termination = Termination::SpanExhausted;
    let last = uo.len() - 1;
    let uo = reconstruct_x(&uo, b, last)?;

    // stable arc: q .. origin
    let qs = point_on_segment(&s, c.b_segment, c.b_t);
    let mut so = s.slice(c.b_segment + 1, s.len() - 1);
    so.samples.insert(0, PhaseState { p: c.point, ..qs });
    so.termination = Termination::SpanExhausted;
    let so = reconstruct_x(&so, b, 0)?;

    let x_minus = uo.origin_limit_x.expect("shots carry an origin limit");
    let x_plus = so.origin_limit_x.expect("shots carry an origin limit");
    Ok(Some(Junction { unstable: uo, stable: so, x_minus, x_plus }))
}

/// The four-piece solution through the origin, when the unstable orbit of
/// `K0` meets the stable orbit of `K1`; `None` when they do not meet.
pub fn build_conflicting_extra(spec: &CostSpec<f64>) -> Result<Option<AdmissibleSolution>> {
    build_conflicting_extra_with(spec, &Tolerances::default())
}

pub fn build_conflicting_extra_with(spec: &CostSpec<f64>, tol: &Tolerances) -> Result<Option<AdmissibleSolution>> {
    require_regime(spec, Regime::ConflictingMany)?;
    let opts = shoot_options();
    let b = spec.breakpoints()[0];
    let (k0, k1) = (spec.slopes()[0], spec.slopes()[1]);
    let Some(j) = junction(k0, k1, b, &opts)? else {
        return Ok(None);
    };

    // stable orbit of K0 coming from K0, ending at the origin at x_minus
    let Some(left) = branch(|side| shoot_stable_with(k0, side, &opts), |o| o.reached_equilibrium())? else {
        return Ok(None);
    };
    let left = reconstruct_x(&left, left.last().x - (left.origin_limit_x.unwrap() - j.x_minus), left.len() - 1)?;
    // unstable orbit of K1 leaving the origin at x_plus towards K1
    let Some(right) = branch(|side| shoot_unstable_with(k1, side, &opts), |o| o.reached_equilibrium())? else {
        return Ok(None);
    };
    let right = reconstruct_x(&right, right.first().x + (j.x_plus - right.origin_limit_x.unwrap()), 0)?;

    let pieces = vec![
        Piece::Constant {
            p: k0,
            x_lo: f64::NEG_INFINITY,
            x_hi: left.first().x,
        },
        Piece::from_orbit(&left, OriginEnd::End),
        Piece::from_orbit(&j.unstable, OriginEnd::Start),
        Piece::from_orbit(&j.stable, OriginEnd::End),
        Piece::from_orbit(&right, OriginEnd::Start),
        Piece::Constant {
            p: k1,
            x_lo: right.last().x,
            x_hi: f64::INFINITY,
        },
    ];
    AdmissibleSolution::assemble(
        Regime::ConflictingMany,
        Costs::Piecewise(spec.to_raw()),
        pieces,
        None,
        None,
        tol,
    )
    .map(Some)
}

fn branch<F, P>(shoot: F, pick: P) -> Result<Option<Orbit<f64>>>
where
    F: Fn(Side) -> Result<Orbit<f64>>,
    P: Fn(&Orbit<f64>) -> bool,
{
    for side in Side::BOTH {
        let o = shoot(side)?;
        if pick(&o) {
            return Ok(Some(o));
        }
    }
    Ok(None)
}

/// Slopes of a periodic cost: `K0` on `]x_minus + n l, n l[`, `K1` on
/// `]n l, x_plus + n l[`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpec {
    pub k0: [f64; 2],
    pub k1: [f64; 2],
    #[serde(default)]
    pub offsets: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCosts {
    pub k0: [f64; 2],
    pub k1: [f64; 2],
    pub x_minus: f64,
    pub x_plus: f64,
    /// `h(0)`.
    pub offsets: [f64; 2],
}

impl PeriodicCosts {
    pub fn period(&self) -> f64 {
        self.x_plus - self.x_minus
    }

    /// Increase of `h` over one period.
    pub fn drift(&self) -> [f64; 2] {
        [
            -self.k0[0] * self.x_minus + self.k1[0] * self.x_plus,
            -self.k0[1] * self.x_minus + self.k1[1] * self.x_plus,
        ]
    }

    fn reduce(&self, x: f64) -> (f64, f64) {
        let l = self.period();
        let n = ((x - self.x_minus) / l).floor();
        let mut r = x - n * l;
        if r >= self.x_plus {
            r -= l;
            return (n + 1.0, r);
        }
        if r < self.x_minus {
            r = self.x_minus;
        }
        (n, r)
    }

    pub fn eval_costs(&self, x: f64) -> [f64; 2] {
        let (n, r) = self.reduce(x);
        let d = self.drift();
        let k = if r < 0.0 { self.k0 } else { self.k1 };
        [
            self.offsets[0] + n * d[0] + k[0] * r,
            self.offsets[1] + n * d[1] + k[1] * r,
        ]
    }

    pub fn slopes_at(&self, x: f64) -> [f64; 2] {
        let (_, r) = self.reduce(x);
        if r < 0.0 {
            self.k0
        } else {
            self.k1
        }
    }

    /// Ordinary piecewise-linear spec agreeing with the periodic costs on
    /// `periods` periods on each side of the origin.
    pub fn truncated(&self, periods: usize) -> Result<CostSpec<f64>> {
        let l = self.period();
        let m = periods as i64;
        let mut breakpoints = Vec::new();
        let mut slopes = vec![self.k1];
        for n in -m..=m {
            let nf = n as f64;
            breakpoints.push(self.x_minus + nf * l);
            slopes.push(self.k0);
            breakpoints.push(nf * l);
            slopes.push(self.k1);
        }
        CostSpec::new(breakpoints, slopes, self.offsets)
    }
}

/// Periodic solution repeating the unstable arc of `K0` and the stable arc
/// of `K1` on every period.
pub fn build_periodic(spec: &PeriodicSpec) -> Result<AdmissibleSolution> {
    build_periodic_with(spec, &Tolerances::default())
}

pub fn build_periodic_with(spec: &PeriodicSpec, tol: &Tolerances) -> Result<AdmissibleSolution> {
    let (s0, s1) = (classify_sector(spec.k0), classify_sector(spec.k1));
    if s0 != Sector::Open(3) || s1 != Sector::Open(4) {
        return Err(Error::PreconditionViolation(format!(
            "periodic construction needs K0 in A3 and K1 in A4, got {s0} and {s1}"
        )));
    }
    let Some(j) = junction(spec.k0, spec.k1, 0.0, &shoot_options())? else {
        return Err(Error::NoIntersection);
    };
    let costs = PeriodicCosts {
        k0: spec.k0,
        k1: spec.k1,
        x_minus: j.x_minus,
        x_plus: j.x_plus,
        offsets: spec.offsets,
    };
    let pieces = vec![
        Piece::from_orbit(&j.unstable, OriginEnd::Start),
        Piece::from_orbit(&j.stable, OriginEnd::End),
    ];
    AdmissibleSolution::assemble(
        Regime::Periodic,
        Costs::Periodic(costs),
        pieces,
        Some(Periodicity {
            period: costs.period(),
            base: j.x_minus,
        }),
        None,
        tol,
    )
}
