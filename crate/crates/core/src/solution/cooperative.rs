//! Unique solution for cooperative costs: constant equilibrium on the first
//! interval, then Cauchy problems glued left to right.

use super::{require_regime, AdmissibleSolution, Costs, OriginEnd, Piece, Tolerances, SAMPLE_DX};
use crate::error::{Error, Result};
use crate::model::{classify_regime, classify_sector, CostSpec, Regime, Sector};
use crate::orbit::{integrate_from, Direction, StopConditions, Termination};

/// Invariant region `{p1, p2 in [0, 2 C1], p1 + p2 >= C2 / 2}` of an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBox {
    pub c1: f64,
    pub c2: f64,
}

/// Box for interval slopes `k` entered at `p_in`.
pub fn gamma_box(k: [f64; 2], p_in: [f64; 2]) -> GammaBox {
    GammaBox {
        c1: k[0].max(k[1]).max(p_in[0] / 2.0).max(p_in[1] / 2.0),
        c2: k[0].min(k[1]).min(p_in[0] + p_in[1]),
    }
}

pub fn in_gamma_box(b: &GammaBox, p: [f64; 2], tol: f64) -> bool {
    let hi = 2.0 * b.c1 + tol;
    (-tol..=hi).contains(&p[0]) && (-tol..=hi).contains(&p[1]) && p[0] + p[1] >= b.c2 / 2.0 - tol
}

const BOX_TOL: f64 = 1e-9;

/// Builds the unique admissible solution for cooperative costs.
pub fn build_cooperative(spec: &CostSpec<f64>) -> Result<AdmissibleSolution> {
    build_cooperative_with(spec, &Tolerances::default())
}

pub fn build_cooperative_with(spec: &CostSpec<f64>, tol: &Tolerances) -> Result<AdmissibleSolution> {
    let decreasing = cooperative_orientation(spec)?;
    let costs = Costs::Piecewise(spec.to_raw());
    let pieces = if decreasing {
        // x -> -x maps decreasing costs onto increasing ones
        reflect_pieces(increasing_pieces(&spec.reflected())?)
    } else {
        increasing_pieces(spec)?
    };
    AdmissibleSolution::assemble(Regime::CooperativeUnique, costs, pieces, None, None, tol)
}

/// `true` for decreasing costs. Slope pairs on the diagonal between the two
/// cooperative sectors are accepted: the gluing argument only needs both
/// slopes of every pair to share one strict sign.
fn cooperative_orientation(spec: &CostSpec<f64>) -> Result<bool> {
    let k = spec.slopes();
    let all = |f: fn(f64) -> bool| k.iter().all(|kj| f(kj[0]) && f(kj[1]));
    let on_diagonal_only = classify_regime(spec).regime == Regime::UnsupportedBoundary
        && k.iter().all(|&kj| matches!(classify_sector(kj), Sector::Open(_)) || kj[0] == kj[1]);
    if on_diagonal_only && all(|v| v > 0.0) {
        return Ok(false);
    }
    if on_diagonal_only && all(|v| v < 0.0) {
        return Ok(true);
    }
    require_regime(spec, Regime::CooperativeUnique)?;
    Ok(matches!(classify_sector(k[0]), Sector::Open(5 | 6)))
}

fn increasing_pieces(spec: &CostSpec<f64>) -> Result<Vec<Piece>> {
    let bps = spec.breakpoints();
    let slopes = spec.slopes();
    let n = bps.len();
    if n == 0 {
        return Ok(vec![Piece::Constant {
            p: slopes[0],
            x_lo: f64::NEG_INFINITY,
            x_hi: f64::INFINITY,
        }]);
    }
    let mut pieces = vec![Piece::Constant {
        p: slopes[0],
        x_lo: f64::NEG_INFINITY,
        x_hi: bps[0],
    }];
    let mut p = slopes[0];
    for j in 1..=n {
        let k = slopes[j];
        let last = j == n;
        let mut stop = StopConditions {
            s_span: 1e4,
            stop_at_equilibrium: last,
            ..StopConditions::default()
        }
        .with_max_dx(SAMPLE_DX);
        if !last {
            stop = stop.with_crossing(bps[j]);
        }
        let orbit = integrate_from(p, bps[j - 1], k, Direction::Forward, &stop)?;
        let ok = match orbit.termination {
            Termination::CrossedBreakpoint(_) => !last,
            Termination::ReachedEquilibrium(_) => last,
            _ => false,
        };
        if !ok {
            return Err(Error::ConvergenceFailure(format!(
                "interval {j}: orbit from ({}, {}) ended with {}",
                p[0], p[1], orbit.termination
            )));
        }
        let bx = gamma_box(k, p);
        if let Some(st) = orbit.samples.iter().find(|st| !in_gamma_box(&bx, st.p, BOX_TOL)) {
            return Err(Error::InvariantBoxViolation { x: st.x, p1: st.p[0], p2: st.p[1] });
        }
        pieces.push(Piece::from_orbit(&orbit, OriginEnd::None));
        p = orbit.last().p;
        if last {
            pieces.push(Piece::Constant {
                p: k,
                x_lo: orbit.last().x,
                x_hi: f64::INFINITY,
            });
        }
    }
    Ok(pieces)
}

/// Profile of `x -> -p(-x)`.
pub(crate) fn reflect_pieces(pieces: Vec<Piece>) -> Vec<Piece> {
    pieces
        .into_iter()
        .rev()
        .map(|pc| match pc {
            Piece::Constant { p, x_lo, x_hi } => Piece::Constant {
                p: [-p[0], -p[1]],
                x_lo: -x_hi,
                x_hi: -x_lo,
            },
            Piece::Sampled { slopes, termination, mut samples } => {
                samples.reverse();
                for smp in &mut samples {
                    smp.x = -smp.x;
                    smp.s = -smp.s;
                    smp.p = [-smp.p[0], -smp.p[1]];
                }
                Piece::Sampled {
                    slopes: [-slopes[0], -slopes[1]],
                    termination,
                    samples,
                }
            }
        })
        .collect()
}
