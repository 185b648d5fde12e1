//! Acceptance suite: one line per criterion with its measured runtime.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hjgame_core::nash::{
    best_response, deviation_gap, deviation_gap_with, simulate_closed_loop, DeviationOptions, GridParams,
    SimulationOptions,
};
use hjgame_core::phase::{capital_delta, linearization, DirectionMap};
use hjgame_core::solution::{
    build_conflicting_family, build_cooperative, build_mixed_family, build_periodic, certify_nonexistence,
    gamma_box, hj_values, in_gamma_box, mixed_bounds, PeriodicSpec, Piece,
};
use hjgame_core::{
    check_admissibility, classify_regime, direction_map, reconstruct_values, CostSpec, Error, Player, Regime,
    Tolerances,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e(err: Error) -> String {
    err.to_string()
}

fn unit_spec() -> CostSpec<f64> {
    CostSpec::linear([1.0, 1.0]).unwrap()
}

fn c1_closed_form() -> Check {
    let sol = build_cooperative(&unit_spec()).map_err(e)?;
    let rep = &sol.admissibility;
    ensure(rep.is_admissible(), format!("verdict {:?}", rep.verdict))?;
    ensure(rep.hj_residual_sup <= 1e-12, format!("residual {:e}", rep.hj_residual_sup))?;
    let rows = reconstruct_values(&sol, [-50.0, 50.0], 1e-3).map_err(e)?;
    let worst_u = rows
        .iter()
        .flat_map(|r| r.u.map(|u| (u - (r.x - 1.5)).abs()))
        .fold(0.0f64, f64::max);
    ensure(worst_u <= 1e-12, format!("max |u - (x - 3/2)| = {worst_u:e}"))?;
    let mut worst_j = 0.0f64;
    for y in [-2.0, 0.0, 1.0, 5.0] {
        let run = simulate_closed_loop(&sol, y, 40.0).map_err(e)?;
        for j in run.costs {
            worst_j = worst_j.max((j - (y - 1.5)).abs());
        }
    }
    ensure(worst_j <= 1e-6, format!("max |J - (y - 3/2)| = {worst_j:e}"))?;
    Ok(format!("residual {:.1e}, max |J - (y - 3/2)| = {worst_j:.1e}", rep.hj_residual_sup))
}

fn c2_gluing() -> Check {
    let spec = CostSpec::new(vec![0.0, 1.0], vec![[1.0, 2.0], [2.0, 1.0], [1.0, 3.0]], [0.0, 0.0]).map_err(e)?;
    let sol = build_cooperative(&spec).map_err(e)?;
    let rep = check_admissibility(&sol, &Tolerances::default()).map_err(e)?;
    ensure(rep.is_admissible(), format!("verdict {:?}", rep.verdict))?;
    ensure(rep.hj_residual_sup <= 1e-6, format!("residual {:e}", rep.hj_residual_sup))?;
    ensure(sol.jump_points.is_empty() && rep.jump_checks.is_empty(), "jumps present")?;
    ensure(rep.tails_linear, "tails are not linear")?;
    let mut checked = 0;
    for j in 1..=2 {
        let Piece::Sampled { samples, slopes, .. } = &sol.pieces[j] else {
            return Err(format!("piece {j} is not sampled"));
        };
        let bx = gamma_box(*slopes, samples[0].p);
        for s in samples {
            ensure(in_gamma_box(&bx, s.p, 0.0), format!("piece {j} leaves its box at x = {}", s.x))?;
            checked += 1;
        }
    }
    Ok(format!("residual {:.1e}, {checked} samples inside their boxes", rep.hj_residual_sup))
}

fn c3_family() -> Check {
    let spec = CostSpec::new(vec![0.0], vec![[-2.0, 1.0], [-1.0, 2.0]], [0.0, 0.0]).map_err(e)?;
    let mut sols = Vec::new();
    for r in [0.02, 0.05, 0.08] {
        let sol = build_conflicting_family(&spec, [-r, r]).map_err(e)?;
        ensure(sol.admissibility.is_admissible(), format!("datum {r}: {:?}", sol.admissibility.verdict))?;
        sols.push(sol);
    }
    let xs: Vec<f64> = (0..=10_000).map(|i| -5.0 + i as f64 * 1e-3).collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..3 {
        for b in a + 1..3 {
            let d = xs
                .iter()
                .map(|&x| {
                    let (pa, pb) = (sols[a].p_at(x).unwrap(), sols[b].p_at(x).unwrap());
                    (pa[0] - pb[0]).abs().max((pa[1] - pb[1]).abs())
                })
                .fold(0.0f64, f64::max);
            min_dist = min_dist.min(d);
        }
    }
    ensure(min_dist > 1e-3, format!("closest pair sup distance {min_dist:e}"))?;
    Ok(format!("3 admissible members, min pairwise sup distance {min_dist:.3}"))
}

fn c4_nonexistence() -> Check {
    let spec = CostSpec::new(vec![0.0], vec![[-1.0, 2.0], [-2.0, 1.0]], [0.0, 0.0]).map_err(e)?;
    let regime = classify_regime(&spec).regime;
    ensure(regime == Regime::ConflictingNone, format!("regime {regime}"))?;
    let cert = certify_nonexistence(&spec, 100).map_err(e)?;
    ensure(cert.probes.len() == 100, "probe count")?;
    ensure(cert.inconsistent == 100, format!("{}/100 inconsistent", cert.inconsistent))?;
    Ok(format!("ConflictingNone, {}/100 probes inconsistent", cert.inconsistent))
}

fn c5_mixed() -> Check {
    let spec = CostSpec::new(vec![0.0], vec![[-2.0, -1.0], [1.0, 2.0]], [0.0, 0.0]).map_err(e)?;
    let (g0, g1) = mixed_bounds(&spec).map_err(e)?;
    let (f0, f1) = (-0.5 - 0.75f64.sqrt(), 1.0 - 3f64.sqrt());
    ensure((g0 - f0).abs() <= 1e-12 && (g1 - f1).abs() <= 1e-12, format!("bounds {g0} {g1}"))?;
    let sol = build_mixed_family(&spec, [-0.1, 0.1]).map_err(e)?;
    ensure(sol.admissibility.is_admissible(), format!("{:?}", sol.admissibility.verdict))?;
    let rejected = matches!(build_mixed_family(&spec, [-0.1, 0.05]), Err(Error::DatumOutsideFamily { .. }));
    ensure(rejected, "ratio -0.5 was not rejected")?;
    Ok(format!("bounds ({g0:.12}, {g1:.12}), member admissible, ratio -0.5 rejected"))
}

fn c6_eigen() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k: [f64; 2] = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        let (h, d) = linearization(k).map_err(e)?;
        ensure(d.lambda_minus < 0.0 && d.lambda_plus > 0.0, format!("eigenvalue signs at {k:?}"))?;
        for (lam, v) in [(d.lambda_minus, d.v_minus), (d.lambda_plus, d.v_plus)] {
            let hv = [h[0][0] * v[0] + h[0][1] * v[1], h[1][0] * v[0] + h[1][1] * v[1]];
            let res = (hv[0] - lam * v[0]).hypot(hv[1] - lam * v[1]);
            let rel = res / (lam.abs() * v[0].hypot(v[1]));
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-10, format!("relative eigen residual {worst:e}"))?;
    for map in DirectionMap::ALL {
        let sign = if map.positive_domain() { 1.0 } else { -1.0 };
        for _ in 0..10_000 {
            let a = sign * 10f64.powf(rng.gen_range(-4.0..4.0));
            let b = sign * 10f64.powf(rng.gen_range(-4.0..4.0));
            let (lo, hi): (f64, f64) = if a < b { (a, b) } else { (b, a) };
            if lo == hi {
                continue;
            }
            let (glo, ghi) = (direction_map(map, lo).map_err(e)?, direction_map(map, hi).map_err(e)?);
            ensure(glo < ghi, format!("{} not increasing on ({lo}, {hi})", map.name()))?;
        }
    }
    let limits: [(DirectionMap, f64, f64); 6] = [
        (DirectionMap::GMinus, 1e-9, -2.0),
        (DirectionMap::LowerGMinus, -1e-9, -2.0),
        (DirectionMap::GPlus, 1e-9, 0.0),
        (DirectionMap::LowerGPlus, -1e-9, 0.0),
        (DirectionMap::GMinus, 1e9, -0.5),
        (DirectionMap::LowerGPlus, -1e9, -0.5),
    ];
    for (map, alpha, limit) in limits {
        let g = direction_map(map, alpha).map_err(e)?;
        ensure((g - limit).abs() <= 1e-6, format!("{}({alpha}) = {g}", map.name()))?;
    }
    Ok(format!("max relative eigen residual {worst:.1e}, maps increasing, 6 limits reproduced"))
}

fn c7_delta() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let p = [rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3)];
        let d = capital_delta(p);
        let n = p[0] * p[0] + p[1] * p[1];
        let slack = 1e-12 * n;
        ensure(0.5 * n <= d + slack && d <= 2.0 * n + slack, format!("bounds fail at {p:?}"))?;
    }
    Ok("100000 samples within bounds".into())
}

fn c8_nash() -> Check {
    let sol = build_cooperative(&unit_spec()).map_err(e)?;
    let bound = 2.0 * sol.max_abs_p([-10.0, 10.0]) + 1.0;
    let grid = |dx: f64| GridParams {
        control_bound: Some(bound),
        ..GridParams::window(-10.0, 10.0, dx)
    };
    let mut worst_gap = 0.0f64;
    for y in [0.0, 1.0] {
        for r in deviation_gap(&sol, y, &grid(1e-3)).map_err(e)? {
            worst_gap = worst_gap.max(r.gap.abs());
        }
    }
    ensure(worst_gap <= 5e-2, format!("|gap| {worst_gap:e}"))?;

    let mut min_ratio = f64::INFINITY;
    let mut errs = Vec::new();
    for pl in Player::BOTH {
        let j = pl.other().index();
        let opp = |x: f64| -sol.p_at(x).unwrap()[j];
        let coarse = best_response(&sol.costs, opp, pl, &grid(1e-3)).map_err(e)?;
        let fine = best_response(&sol.costs, opp, pl, &grid(5e-4)).map_err(e)?;
        for y in [0.0, 1.0] {
            let u = hj_values([y, y], sol.p_at(y).unwrap())[pl.index()];
            let (ec, ef) = ((coarse.value_at(y).unwrap() - u).abs(), (fine.value_at(y).unwrap() - u).abs());
            errs.push(ec);
            min_ratio = min_ratio.min(ec / ef);
        }
    }
    ensure(min_ratio >= 1.8, format!("refinement ratio {min_ratio}"))?;

    let opts = DeviationOptions {
        simulation: SimulationOptions {
            bias: [-0.3, 0.0],
            ..SimulationOptions::default()
        },
        ..DeviationOptions::default()
    };
    let [corrupted, _] = deviation_gap_with(&sol, 1.0, &grid(1e-3), &opts).map_err(e)?;
    ensure(corrupted.gap >= 2e-2, format!("corrupted gap {}", corrupted.gap))?;
    Ok(format!(
        "max |gap| {worst_gap:.1e}, |v - u| {:.1e} -> ratio {min_ratio:.2}, corrupted gap {:.4}",
        errs.iter().fold(0.0f64, |m, &v| m.max(v)),
        corrupted.gap
    ))
}

fn c9_periodic() -> Check {
    let spec = PeriodicSpec {
        k0: [-1.0, 2.0],
        k1: [-2.0, 1.0],
        offsets: [0.0, 0.0],
    };
    let outcome = match build_periodic(&spec) {
        Err(Error::NoIntersection) => "no crossing for K0 = (-1, 2), K1 = (-2, 1): NoIntersection recorded".to_string(),
        Ok(sol) => format!("crossing found, {}", periodic_check(&sol)?),
        Err(other) => return Err(e(other)),
    };
    // a pair whose orbits do cross exercises the periodic construction
    let q = std::f64::consts::FRAC_PI_4;
    let crossing = PeriodicSpec {
        k0: [(2.875 * q).cos(), (2.875 * q).sin()],
        k1: [(3.125 * q).cos(), (3.125 * q).sin()],
        offsets: [0.0, 0.0],
    };
    let sol = build_periodic(&crossing).map_err(e)?;
    Ok(format!("{outcome}; near-boundary pair: {}", periodic_check(&sol)?))
}

fn periodic_check(sol: &hjgame_core::AdmissibleSolution) -> Check {
    ensure(sol.admissibility.is_admissible(), format!("{:?}", sol.admissibility.verdict))?;
    let per = sol.periodicity.ok_or("no period")?;
    let n = 20_000;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let x = per.base - per.period + 2.0 * per.period * i as f64 / n as f64;
        let (a, b) = (sol.p_at(x).unwrap(), sol.p_at(x + per.period).unwrap());
        worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
    }
    ensure(worst <= 1e-6, format!("periodicity defect {worst:e}"))?;
    Ok(format!("period {:.4}, defect {worst:.1e}, admissible", per.period))
}

fn c10_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let config = dir.path().join("gluing.json");
    fs::write(&config, r#"{"breakpoints": [0, 1], "slopes": [[1, 2], [2, 1], [1, 3]], "offsets": [0, 0]}"#)
        .map_err(|x| x.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let root = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_hjgame"))
            .args(["solve", "--config"])
            .arg(&config)
            .arg("--runs-dir")
            .arg(&root)
            .output()
            .map_err(|x| x.to_string())?;
        ensure(out.status.success(), format!("solve exited with {:?}", out.status.code()))?;
        let run = fs::read_dir(&root).map_err(|x| x.to_string())?.next().ok_or("no run directory")?;
        runs.push(run.map_err(|x| x.to_string())?.path());
    }
    let files = ["config.json", "solution.csv", "solution.json", "admissibility.json"];
    for f in files {
        let (a, b) = (read(&runs[0].join(f))?, read(&runs[1].join(f))?);
        ensure(a == b, format!("{f} differs"))?;
    }
    // the manifest differs only in its run id
    let strip = |p: &Path| -> Result<String, String> {
        let text = String::from_utf8(read(p)?).map_err(|x| x.to_string())?;
        Ok(text.lines().filter(|l| !l.contains("\"run_id\"")).collect::<Vec<_>>().join("\n"))
    };
    ensure(strip(&runs[0].join("run.json"))? == strip(&runs[1].join("run.json"))?, "run.json differs")?;
    Ok(format!("{} artifacts byte-identical", files.len()))
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    fs::read(p).map_err(|x| format!("{}: {x}", p.display()))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("closed-form value match", 5, c1_closed_form),
        ("cooperative gluing", 10, c2_gluing),
        ("conflicting family", 30, c3_family),
        ("nonexistence", 60, c4_nonexistence),
        ("mixed family", 30, c5_mixed),
        ("eigen-structure", 60, c6_eigen),
        ("determinant bounds", 60, c7_delta),
        ("Nash deviation", 120, c8_nash),
        ("periodic construction", 60, c9_periodic),
        ("CLI determinism", 60, c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = check();
        let took = t0.elapsed();
        let result = match result {
            Ok(detail) if took > Duration::from_secs(*limit) => Err(format!("{detail}; runtime over limit")),
            r => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {:>2} {status} {name}: {detail} [{:.2} s, limit {limit} s]",
            i + 1,
            took.as_secs_f64()
        );
        failed += result.is_err() as usize;
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
