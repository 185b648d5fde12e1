//! Numerical corroboration that a conflicting spec has no admissible
//! solution: every probe datum either blows up forward under `K1`, or has a
//! backward continuation under `K0` that is unbounded or collapses into the
//! origin.

use serde::{Deserialize, Serialize};

use super::require_regime;
use crate::error::Result;
use crate::model::{CostSpec, Regime, RegimeReport};
use crate::orbit::{integrate, shoot_stable_with, Direction, ShootOptions, Side, StopConditions, Termination};

const PROBE_RADIUS: f64 = 3.0;
const PROBE_EXCLUSION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    /// Forward orbit under `K1` is unbounded.
    ForwardBlowUp,
    /// Forward orbit stays bounded; backward orbit under `K0` is unbounded.
    BackwardBlowUp,
    /// Backward orbit under `K0` collapses into the origin, so the profile
    /// cannot be continued to `-inf` with bounded gradient.
    BackwardReachesOrigin,
    /// Neither criterion fired within the integration budget.
    Unresolved,
}

impl ProbeOutcome {
    pub fn is_inconsistent(self) -> bool {
        self != ProbeOutcome::Unresolved
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub p0: [f64; 2],
    pub forward: String,
    pub backward: Option<String>,
    pub outcome: ProbeOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceCertificate {
    pub regime: RegimeReport,
    pub argument: String,
    pub probes: Vec<ProbeRecord>,
    pub inconsistent: usize,
    /// Outcome of continuing points of each stable branch of `K1`
    /// backward under `K0`.
    pub stable_branch_checks: Vec<ProbeRecord>,
}

impl NonexistenceCertificate {
    pub fn all_inconsistent(&self) -> bool {
        self.inconsistent == self.probes.len() && self.stable_branch_checks.iter().all(|r| r.outcome.is_inconsistent())
    }
}

/// Probe points: cell centers of a `k x k` grid on `[-R, R]^2` avoiding a
/// neighbourhood of the origin, `k` grown until `n` points are available.
pub fn probe_points(n: usize) -> Vec<[f64; 2]> {
    if n == 0 {
        return Vec::new();
    }
    let mut k = (n as f64).sqrt().ceil() as usize;
    loop {
        let h = 2.0 * PROBE_RADIUS / k as f64;
        let pts: Vec<[f64; 2]> = (0..k)
            .flat_map(|i| (0..k).map(move |j| [-PROBE_RADIUS + (i as f64 + 0.5) * h, -PROBE_RADIUS + (j as f64 + 0.5) * h]))
            .filter(|p| p[0].hypot(p[1]) >= PROBE_EXCLUSION)
            .collect();
        if pts.len() >= n {
            return pts.into_iter().take(n).collect();
        }
        k += 1;
    }
}

fn classify_probe(p0: [f64; 2], k0: [f64; 2], k1: [f64; 2], stop: &StopConditions<f64>) -> Result<ProbeRecord> {
    let fwd = integrate(p0, k1, Direction::Forward, stop)?;
    if fwd.termination.is_blow_up() {
        return Ok(ProbeRecord {
            p0,
            forward: fwd.termination.tag().into(),
            backward: None,
            outcome: ProbeOutcome::ForwardBlowUp,
        });
    }
    let back = integrate(p0, k0, Direction::Backward, stop)?;
    let outcome = match back.termination {
        Termination::BlowUp { .. } => ProbeOutcome::BackwardBlowUp,
        Termination::ReachedOrigin => ProbeOutcome::BackwardReachesOrigin,
        _ => ProbeOutcome::Unresolved,
    };
    Ok(ProbeRecord {
        p0,
        forward: fwd.termination.tag().into(),
        backward: Some(back.termination.tag().into()),
        outcome,
    })
}

pub fn certify_nonexistence(spec: &CostSpec<f64>, n_probes: usize) -> Result<NonexistenceCertificate> {
    let regime = require_regime(spec, Regime::ConflictingNone)?;
    let (k0, k1) = (spec.slopes()[0], spec.slopes()[1]);
    let stop = StopConditions::default().with_span(200.0);

    let probes = probe_points(n_probes)
        .into_iter()
        .map(|p| classify_probe(p, k0, k1, &stop))
        .collect::<Result<Vec<_>>>()?;
    let inconsistent = probes.iter().filter(|r| r.outcome.is_inconsistent()).count();

    let mut stable_branch_checks = Vec::new();
    if n_probes > 0 {
        let opts = ShootOptions {
            stop: stop.clone(),
            ..ShootOptions::default()
        };
        for side in Side::BOTH {
            let branch = shoot_stable_with(k1, side, &opts)?;
            // points of the branch at a few distances from the origin
            for frac in [0.2, 0.5, 0.8] {
                let idx = ((branch.len() - 1) as f64 * frac) as usize;
                let p0 = branch.samples[idx].p;
                let back = integrate(p0, k0, Direction::Backward, &stop)?;
                let outcome = match back.termination {
                    Termination::BlowUp { .. } => ProbeOutcome::BackwardBlowUp,
                    Termination::ReachedOrigin => ProbeOutcome::BackwardReachesOrigin,
                    _ => ProbeOutcome::Unresolved,
                };
                stable_branch_checks.push(ProbeRecord {
                    p0,
                    forward: "reached_origin".into(),
                    backward: Some(back.termination.tag().into()),
                    outcome,
                });
            }
        }
    }

    Ok(NonexistenceCertificate {
        regime,
        argument: "a profile bounded as x -> +inf must follow a stable orbit of the origin for the K1 \
                   dynamics; continued backward under the K0 dynamics such an orbit becomes unbounded \
                   in finite or infinite time, contradicting linear growth of the value functions"
            .into(),
        probes,
        inconsistent,
        stable_branch_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn probe_grid_avoids_origin() {
        let pts = probe_points(100);
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|p| p[0].hypot(p[1]) >= PROBE_EXCLUSION));
        assert!(probe_points(0).is_empty());
    }

    #[test]
    fn zero_probes_is_verdict_only() {
        let spec = CostSpec::new(vec![0.0], vec![[-1.0, 2.0], [-2.0, 1.0]], [0.0, 0.0]).unwrap();
        let cert = certify_nonexistence(&spec, 0).unwrap();
        assert!(cert.probes.is_empty());
        assert_eq!(cert.regime.regime, Regime::ConflictingNone);
    }

    #[test]
    fn cooperative_is_rejected() {
        let spec = CostSpec::linear([1.0, 1.0]).unwrap();
        assert!(matches!(certify_nonexistence(&spec, 4), Err(Error::RegimeMismatch { .. })));
    }
}
