//! One-parameter families through a datum at the breakpoint: the backward
//! orbit tends to `K0`, the forward orbit to `K1`.

use super::{require_regime, AdmissibleSolution, Costs, OriginEnd, Piece, Tolerances, SAMPLE_DX};
use crate::error::{Error, Result};
use crate::model::{classify_sector, CostSpec, Regime, Sector};
use crate::orbit::{integrate_from, Direction, StopConditions, Termination};
use crate::phase::{direction_map, DirectionMap};

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    /// How many times the datum may be halved when an orbit misses its
    /// equilibrium.
    pub max_shrinks: usize,
    pub stop: StopConditions<f64>,
    pub tolerances: Tolerances,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions {
            max_shrinks: 20,
            stop: StopConditions {
                s_span: 1e3,
                ..StopConditions::default()
            }
            .with_max_dx(SAMPLE_DX),
            tolerances: Tolerances::default(),
        }
    }
}

/// Family member for conflicting costs with datum `p_in` on the
/// anti-diagonal, `p1 < 0 < p2` (`p2 < 0 < p1` when `K0` is in A7).
pub fn build_conflicting_family(spec: &CostSpec<f64>, p_in: [f64; 2]) -> Result<AdmissibleSolution> {
    build_conflicting_family_with(spec, p_in, &FamilyOptions::default())
}

pub fn build_conflicting_family_with(
    spec: &CostSpec<f64>,
    p_in: [f64; 2],
    opts: &FamilyOptions,
) -> Result<AdmissibleSolution> {
    require_regime(spec, Regime::ConflictingMany)?;
    if classify_sector(spec.slopes()[0]) == Sector::Open(7) {
        // players swapped: build the A4/A3 configuration and swap back
        let swapped = swap_spec(spec)?;
        let sol = build_conflicting_family_with(&swapped, [p_in[1], p_in[0]], opts)
            .map_err(|e| match e {
                Error::DatumOutsideFamily { reason, .. } => Error::DatumOutsideFamily {
                    p1: p_in[0],
                    p2: p_in[1],
                    reason: reason.replace("p1 < 0 < p2", "p2 < 0 < p1"),
                },
                e => e,
            })?;
        return AdmissibleSolution::assemble(
            Regime::ConflictingMany,
            Costs::Piecewise(spec.to_raw()),
            swap_pieces(sol.pieces),
            None,
            sol.datum.map(|d| [d[1], d[0]]),
            &opts.tolerances,
        );
    }
    let outside = |reason: &str| Error::DatumOutsideFamily {
        p1: p_in[0],
        p2: p_in[1],
        reason: reason.into(),
    };
    if !(p_in[0].is_finite() && p_in[1].is_finite()) {
        return Err(outside("non-finite datum"));
    }
    if (p_in[0] + p_in[1]).abs() > 1e-12 * p_in[0].abs().max(1.0) {
        return Err(outside("datum must satisfy p1 + p2 = 0"));
    }
    if !(p_in[0] < 0.0 && p_in[1] > 0.0) {
        return Err(outside("datum must satisfy p1 < 0 < p2"));
    }
    shrink_and_build(spec, Regime::ConflictingMany, p_in, opts)
}

fn swap_spec(spec: &CostSpec<f64>) -> Result<CostSpec<f64>> {
    let o = spec.offsets();
    CostSpec::new(
        spec.breakpoints().to_vec(),
        spec.slopes().iter().map(|k| [k[1], k[0]]).collect(),
        [o[1], o[0]],
    )
}

fn swap_pieces(pieces: Vec<Piece>) -> Vec<Piece> {
    let sw = |p: [f64; 2]| [p[1], p[0]];
    pieces
        .into_iter()
        .map(|pc| match pc {
            Piece::Constant { p, x_lo, x_hi } => Piece::Constant { p: sw(p), x_lo, x_hi },
            Piece::Sampled { slopes, termination, mut samples } => {
                for smp in &mut samples {
                    smp.p = sw(smp.p);
                    smp.dpdx = sw(smp.dpdx);
                }
                Piece::Sampled { slopes: sw(slopes), termination, samples }
            }
        })
        .collect()
}

/// `(G-(alpha0), G-(alpha1))`, the stable-direction slopes bounding the
/// admissible data cone of a mixed spec.
pub fn mixed_bounds(spec: &CostSpec<f64>) -> Result<(f64, f64)> {
    let k = spec.slopes();
    if k.len() != 2 {
        return Err(Error::PreconditionViolation("mixed specs have exactly one breakpoint".into()));
    }
    let a0 = k[0][1] / k[0][0];
    let a1 = k[1][1] / k[1][0];
    Ok((direction_map(DirectionMap::GMinus, a0)?, direction_map(DirectionMap::GMinus, a1)?))
}

/// Family member for mixed costs: `p1 < 0 < p2` with `p2/p1` strictly
/// between `G-(alpha0)` and `G-(alpha1)`.
pub fn build_mixed_family(spec: &CostSpec<f64>, p_in: [f64; 2]) -> Result<AdmissibleSolution> {
    build_mixed_family_with(spec, p_in, &FamilyOptions::default())
}

pub fn build_mixed_family_with(
    spec: &CostSpec<f64>,
    p_in: [f64; 2],
    opts: &FamilyOptions,
) -> Result<AdmissibleSolution> {
    require_regime(spec, Regime::MixedMany)?;
    let (g0, g1) = mixed_bounds(spec)?;
    let (lo, hi) = if g0 < g1 { (g0, g1) } else { (g1, g0) };
    let outside = |reason: String| Error::DatumOutsideFamily {
        p1: p_in[0],
        p2: p_in[1],
        reason,
    };
    if !(p_in[0] < 0.0 && p_in[1] > 0.0) {
        return Err(outside("datum must satisfy p1 < 0 < p2".into()));
    }
    let ratio = p_in[1] / p_in[0];
    if !(ratio > lo && ratio < hi) {
        return Err(outside(format!("ratio p2/p1 = {ratio} is not in ]{lo}, {hi}[")));
    }
    shrink_and_build(spec, Regime::MixedMany, p_in, opts)
}

fn shrink_and_build(
    spec: &CostSpec<f64>,
    regime: Regime,
    p_in: [f64; 2],
    opts: &FamilyOptions,
) -> Result<AdmissibleSolution> {
    let mut p = p_in;
    let mut last_err = None;
    for _ in 0..=opts.max_shrinks {
        match family_pieces(spec, p, &opts.stop) {
            Ok(pieces) => {
                return AdmissibleSolution::assemble(
                    regime,
                    Costs::Piecewise(spec.to_raw()),
                    pieces,
                    None,
                    Some(p),
                    &opts.tolerances,
                )
            }
            Err(e @ Error::ConvergenceFailure(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        p = [p[0] / 2.0, p[1] / 2.0];
    }
    Err(last_err.unwrap_or_else(|| Error::ConvergenceFailure("no datum tried".into())))
}

/// Constant `K0` tail, backward orbit, forward orbit, constant `K1` tail,
/// with the datum at the breakpoint.
fn family_pieces(spec: &CostSpec<f64>, p_in: [f64; 2], stop: &StopConditions<f64>) -> Result<Vec<Piece>> {
    let b = spec.breakpoints()[0];
    let k = spec.slopes();
    let back = integrate_from(p_in, b, k[0], Direction::Backward, stop)?;
    if !matches!(back.termination, Termination::ReachedEquilibrium(_)) {
        return Err(Error::ConvergenceFailure(format!(
            "backward orbit from ({}, {}) ended with {}",
            p_in[0], p_in[1], back.termination
        )));
    }
    let fwd = integrate_from(p_in, b, k[1], Direction::Forward, stop)?;
    if !matches!(fwd.termination, Termination::ReachedEquilibrium(_)) {
        return Err(Error::ConvergenceFailure(format!(
            "forward orbit from ({}, {}) ended with {}",
            p_in[0], p_in[1], fwd.termination
        )));
    }
    Ok(vec![
        Piece::Constant {
            p: k[0],
            x_lo: f64::NEG_INFINITY,
            x_hi: back.first().x,
        },
        Piece::from_orbit(&back, OriginEnd::None),
        Piece::from_orbit(&fwd, OriginEnd::None),
        Piece::Constant {
            p: k[1],
            x_lo: fwd.last().x,
            x_hi: f64::INFINITY,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conflicting() -> CostSpec<f64> {
        CostSpec::new(vec![0.0], vec![[-2.0, 1.0], [-1.0, 2.0]], [0.0, 0.0]).unwrap()
    }

    fn mixed() -> CostSpec<f64> {
        CostSpec::new(vec![0.0], vec![[-2.0, -1.0], [1.0, 2.0]], [0.0, 0.0]).unwrap()
    }

    #[test]
    fn conflicting_members_are_admissible_and_distinct() {
        let a = build_conflicting_family(&conflicting(), [-0.05, 0.05]).unwrap();
        let b = build_conflicting_family(&conflicting(), [-0.02, 0.02]).unwrap();
        assert!(a.admissibility.is_admissible(), "{:?}", a.admissibility);
        assert!(b.admissibility.is_admissible(), "{:?}", b.admissibility);
        assert_eq!(a.p_at(0.0), a.datum);
        let (pa, pb) = (a.p_at(0.0).unwrap(), b.p_at(0.0).unwrap());
        let da = a.datum.unwrap();
        let db = b.datum.unwrap();
        assert_eq!((pa[0] - pb[0]).abs(), (da[0] - db[0]).abs());
        let far_l = a.p_at(-60.0).unwrap();
        assert_eq!(far_l, [-2.0, 1.0]);
        assert_eq!(a.p_at(60.0).unwrap(), [-1.0, 2.0]);
    }

    #[test]
    fn conflicting_rejects_bad_data() {
        for p in [[0.05, -0.05], [-0.05, 0.04], [f64::NAN, 0.0]] {
            assert!(matches!(
                build_conflicting_family(&conflicting(), p),
                Err(Error::DatumOutsideFamily { .. })
            ));
        }
        assert!(matches!(
            build_conflicting_family(&mixed(), [-0.05, 0.05]),
            Err(Error::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn swapped_players_family() {
        let spec = CostSpec::new(vec![0.0], vec![[1.0, -2.0], [2.0, -1.0]], [0.0, 0.0]).unwrap();
        let sol = build_conflicting_family(&spec, [0.05, -0.05]).unwrap();
        assert!(sol.admissibility.is_admissible(), "{:?}", sol.admissibility);
        assert_eq!(sol.p_at(0.0), Some([0.05, -0.05]));
        assert_eq!(sol.p_at(100.0), Some([2.0, -1.0]));
        assert!(matches!(
            build_conflicting_family(&spec, [-0.05, 0.05]),
            Err(Error::DatumOutsideFamily { .. })
        ));
    }

    #[test]
    fn mixed_bounds_match_formula() {
        let (g0, g1) = mixed_bounds(&mixed()).unwrap();
        assert!((g0 - (-0.5 - 0.75f64.sqrt())).abs() < 1e-12);
        assert!((g1 - (1.0 - 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mixed_member() {
        let sol = build_mixed_family(&mixed(), [-0.1, 0.1]).unwrap();
        assert!(sol.admissibility.is_admissible(), "{:?}", sol.admissibility);
        assert!(matches!(
            build_mixed_family(&mixed(), [-0.1, 0.05]),
            Err(Error::DatumOutsideFamily { .. })
        ));
    }
}
