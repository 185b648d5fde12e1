use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use hjgame_core::model::ConfigError;
use hjgame_core::nash::{deviation_gap_with, simulate_closed_loop_with, DeviationOptions, GridParams, SimulationOptions};
use hjgame_core::solution::{
    build_conflicting_extra_with, build_conflicting_family_with, build_cooperative_with, build_mixed_family_with,
    build_periodic_with, certify_nonexistence, mixed_bounds, Costs, FamilyOptions, PeriodicSpec, Piece,
};
use hjgame_core::{classify_regime, classify_sector, AdmissibleSolution, CostSpec, Error, Regime, Sector, Tolerances};

use crate::run::{sha256_hex, RunDir};
use crate::{Command, Common, ExportFormat, TolArgs};

/// Message and process exit code of a failed command.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(e: std::io::Error) -> Failure {
        Failure {
            code: 1,
            message: format!("i/o error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::NonIncreasingBreakpoints { .. }
            | Error::ZeroSlopePair { .. }
            | Error::NonFiniteEntry { .. }
            | Error::SlopeCountMismatch { .. }
            | Error::DatumOutsideFamily { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidHorizon(_)
            | Error::InvalidStopConditions(_)
            | Error::WindowEscape { .. }
            | Error::Artifact(_) => 2,
            Error::RegimeMismatch { .. } | Error::PreconditionViolation(_) => 3,
            Error::NonConvergence { .. } => 5,
            _ => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Config text, its hash and the validated spec.
struct Loaded {
    text: Vec<u8>,
    hash: String,
    spec: CostSpec<f64>,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let text = fs::read(&common.config)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", common.config.display())))?;
    let s = std::str::from_utf8(&text).map_err(|e| Failure::usage(format!("config is not UTF-8: {e}")))?;
    let spec = CostSpec::from_json(s)?;
    let hash = sha256_hex(&text);
    Ok(Loaded { text, hash, spec })
}

fn open_run(common: &Common, loaded: &Loaded) -> Result<RunDir, Failure> {
    let mut run = RunDir::create(&common.runs_dir, &loaded.hash).map_err(Failure::io)?;
    run.write("config.json", &loaded.text).map_err(Failure::io)?;
    Ok(run)
}

fn finish(run: RunDir, command: &str, loaded: &Loaded, params: serde_json::Value, tol: serde_json::Value) -> Outcome {
    let path = run.finish(command, &loaded.hash, params, tol).map_err(Failure::io)?;
    println!("run directory: {}", path.display());
    Ok(())
}

fn tolerances(t: &TolArgs) -> Result<Tolerances, Failure> {
    let d = Tolerances::default();
    let tol = Tolerances {
        residual: t.tol_residual.unwrap_or(d.residual),
        jump: t.tol_jump.unwrap_or(d.jump),
        grid_dx: t.grid_dx.unwrap_or(d.grid_dx),
        window: t.window.unwrap_or(d.window),
    };
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !(positive(tol.residual) && positive(tol.jump) && positive(tol.grid_dx)) {
        return Err(Failure::usage("tolerances and grid step must be positive"));
    }
    if !(tol.window[0] < tol.window[1] && tol.window.iter().all(|w| w.is_finite())) {
        return Err(Failure::usage("window must satisfy lo < hi"));
    }
    Ok(tol)
}

fn write_solution(run: &mut RunDir, prefix: &str, sol: &AdmissibleSolution, tol: &Tolerances) -> Outcome {
    let mut csv = Vec::new();
    sol.write_csv(&mut csv, tol.window, tol.grid_dx).map_err(Failure::io)?;
    run.write(&format!("{prefix}solution.csv"), &csv).map_err(Failure::io)?;
    let mut text = sol.to_json();
    text.push('\n');
    run.write(&format!("{prefix}solution.json"), text.as_bytes())
        .map_err(Failure::io)?;
    run.write_json(&format!("{prefix}admissibility.json"), &sol.admissibility)
        .map_err(Failure::io)?;
    Ok(())
}

fn verdict_line(sol: &AdmissibleSolution) -> String {
    let a = &sol.admissibility;
    format!(
        "verdict: {} (residual {:.3e}, growth {:.3e}, {} jump point(s))",
        if a.is_admissible() { "admissible" } else { "inadmissible" },
        a.hj_residual_sup,
        a.growth_constant,
        sol.jump_points.len()
    )
}

pub fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Classify { common } => classify(&common),
        Command::Solve { common, tol } => solve(&common, &tol),
        Command::Family {
            common,
            tol,
            pin,
            count,
            extra,
        } => family(&common, &tol, pin, count, extra),
        Command::Nonexist { common, probes } => nonexist(&common, probes),
        Command::Periodic { common, tol } => periodic(&common, &tol),
        Command::Verify {
            common,
            solution,
            y,
            grid_dx,
            window,
            feedback_bias,
            controls,
            max_sweeps,
            horizon,
        } => verify(&common, &solution, &y, grid_dx, window, feedback_bias, (controls, max_sweeps), horizon),
        Command::Simulate {
            common,
            solution,
            y,
            horizon,
            feedback_bias,
        } => simulate(&common, &solution, y, horizon, feedback_bias),
        Command::Export {
            common,
            solution,
            format,
            window,
            grid_dx,
        } => export(&common, &solution, format, window, grid_dx),
    }
}

fn classify(common: &Common) -> Outcome {
    let loaded = load(common)?;
    let report = classify_regime(&loaded.spec);
    let bps = loaded.spec.breakpoints();
    for (j, (k, sector)) in loaded.spec.slopes().iter().zip(&report.per_interval_sectors).enumerate() {
        let lo = if j == 0 { f64::NEG_INFINITY } else { bps[j - 1] };
        let hi = bps.get(j).copied().unwrap_or(f64::INFINITY);
        println!("interval {j} ]{lo}, {hi}[: slopes ({}, {}) in {sector}", k[0], k[1]);
    }
    println!("{}: {}", report.regime, report.regime.headline());
    if !report.notes.is_empty() {
        println!("note: {}", report.notes);
    }
    let mut run = open_run(common, &loaded)?;
    run.write_json("regime.json", &report).map_err(Failure::io)?;
    finish(run, "classify", &loaded, json!({}), json!({}))
}

fn solve(common: &Common, t: &TolArgs) -> Outcome {
    let loaded = load(common)?;
    let tol = tolerances(t)?;
    let sol = build_cooperative_with(&loaded.spec, &tol)?;
    println!("{}: {} piece(s)", sol.regime, sol.pieces.len());
    println!("{}", verdict_line(&sol));
    let mut run = open_run(common, &loaded)?;
    write_solution(&mut run, "", &sol, &tol)?;
    finish(run, "solve", &loaded, json!({}), json!(tol))
}

/// Data `r_k (direction)` with `r_k = 0.08 / 2^k` on the valid line or cone.
fn family_data(spec: &CostSpec<f64>, regime: Regime, count: usize) -> Result<Vec<[f64; 2]>, Failure> {
    let dir = match regime {
        Regime::ConflictingMany => {
            if classify_sector(spec.slopes()[0]) == Sector::Open(7) {
                [1.0, -1.0]
            } else {
                [-1.0, 1.0]
            }
        }
        _ => {
            let (g0, g1) = mixed_bounds(spec)?;
            [-1.0, -0.5 * (g0 + g1)]
        }
    };
    Ok((0..count)
        .map(|k| {
            let r = 0.08 / f64::powi(2.0, k as i32);
            [r * dir[0], r * dir[1]]
        })
        .collect())
}

#[derive(Serialize)]
struct FamilyEntry {
    index: usize,
    requested: [f64; 2],
    datum: Option<[f64; 2]>,
    admissible: bool,
    hj_residual_sup: f64,
}

fn family(common: &Common, t: &TolArgs, pin: Option<[f64; 2]>, count: Option<usize>, extra: bool) -> Outcome {
    let loaded = load(common)?;
    let tol = tolerances(t)?;
    let spec = &loaded.spec;
    let regime = classify_regime(spec).regime;
    if !matches!(regime, Regime::ConflictingMany | Regime::MixedMany) {
        return Err(Error::RegimeMismatch {
            expected: "ConflictingMany or MixedMany".into(),
            found: regime,
        }
        .into());
    }
    if extra && regime != Regime::ConflictingMany {
        return Err(Failure::usage("--extra applies to conflicting costs only"));
    }
    let data = match (pin, count) {
        (Some(p), _) => vec![p],
        (None, Some(0)) => return Err(Failure::usage("--count must be positive")),
        (None, n) => family_data(spec, regime, n.unwrap_or(3))?,
    };
    let opts = FamilyOptions {
        tolerances: tol,
        ..FamilyOptions::default()
    };
    let members: Vec<Result<AdmissibleSolution, Error>> = data
        .par_iter()
        .map(|&p| match regime {
            Regime::ConflictingMany => build_conflicting_family_with(spec, p, &opts),
            _ => build_mixed_family_with(spec, p, &opts),
        })
        .collect();
    let members = members.into_iter().collect::<Result<Vec<_>, Error>>()?;

    let mut run = open_run(common, &loaded)?;
    let mut entries = Vec::new();
    for (i, (sol, p)) in members.iter().zip(&data).enumerate() {
        let d = sol.datum.unwrap_or(*p);
        println!("member {i}: datum ({}, {}); {}", d[0], d[1], verdict_line(sol));
        write_solution(&mut run, &format!("member_{i:03}/"), sol, &tol)?;
        entries.push(FamilyEntry {
            index: i,
            requested: *p,
            datum: sol.datum,
            admissible: sol.admissibility.is_admissible(),
            hj_residual_sup: sol.admissibility.hj_residual_sup,
        });
    }
    let mut extra_found = None;
    if extra {
        match build_conflicting_extra_with(spec, &tol)? {
            Some(sol) => {
                println!("through the origin: {}", verdict_line(&sol));
                write_solution(&mut run, "extra/", &sol, &tol)?;
                extra_found = Some(true);
            }
            None => {
                println!("through the origin: the unstable orbit of K0 does not meet the stable orbit of K1");
                extra_found = Some(false);
            }
        }
    }
    run.write_json("family.json", &json!({ "regime": regime, "members": entries, "extra_found": extra_found }))
        .map_err(Failure::io)?;
    finish(
        run,
        "family",
        &loaded,
        json!({ "pin": pin, "count": count, "extra": extra }),
        json!(tol),
    )
}

fn nonexist(common: &Common, probes: usize) -> Outcome {
    let loaded = load(common)?;
    let cert = certify_nonexistence(&loaded.spec, probes)?;
    println!("{}: {}", cert.regime.regime, cert.regime.regime.headline());
    println!(
        "{}/{} probes inconsistent with admissibility; stable-branch checks: {}/{}",
        cert.inconsistent,
        cert.probes.len(),
        cert.stable_branch_checks.iter().filter(|r| r.outcome.is_inconsistent()).count(),
        cert.stable_branch_checks.len()
    );
    let mut run = open_run(common, &loaded)?;
    run.write_json("certificate.json", &cert).map_err(Failure::io)?;
    finish(run, "nonexist", &loaded, json!({ "probes": probes }), json!({}))
}

fn periodic(common: &Common, t: &TolArgs) -> Outcome {
    let loaded = load(common)?;
    let tol = tolerances(t)?;
    let spec = &loaded.spec;
    if spec.breakpoints() != [0.0] {
        return Err(Failure::usage("periodic costs are built from a config with the single breakpoint 0"));
    }
    let pspec = PeriodicSpec {
        k0: spec.slopes()[0],
        k1: spec.slopes()[1],
        offsets: spec.offsets(),
    };
    let mut run = open_run(common, &loaded)?;
    match build_periodic_with(&pspec, &tol) {
        Ok(sol) => {
            let per = sol.periodicity.expect("periodic solutions carry their period");
            println!("period {} with base point {}", per.period, per.base);
            println!("{}", verdict_line(&sol));
            write_solution(&mut run, "", &sol, &tol)?;
            run.write_json("periodic.json", &json!({ "outcome": "constructed", "periodicity": per }))
                .map_err(Failure::io)?;
            finish(run, "periodic", &loaded, json!({}), json!(tol))
        }
        Err(Error::NoIntersection) => {
            run.write_json("periodic.json", &json!({ "outcome": "no_intersection" }))
                .map_err(Failure::io)?;
            finish(run, "periodic", &loaded, json!({}), json!(tol))?;
            Err(Error::NoIntersection.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn load_solution(path: &Path, loaded: &Loaded) -> Result<AdmissibleSolution, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read solution artifact {}: {e}", path.display())))?;
    let sol = AdmissibleSolution::from_json(&text)?;
    let matches = match &sol.costs {
        Costs::Piecewise(raw) => *raw == loaded.spec.to_raw(),
        Costs::Periodic(pc) => {
            let k = loaded.spec.slopes();
            k.len() == 2 && pc.k0 == k[0] && pc.k1 == k[1] && pc.offsets == loaded.spec.offsets()
        }
    };
    if !matches {
        return Err(Failure::usage("solution artifact was built for different costs than the config"));
    }
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn verify(
    common: &Common,
    solution: &Path,
    ys: &[f64],
    grid_dx: f64,
    window: Option<[f64; 2]>,
    bias: Option<[f64; 2]>,
    (controls, max_sweeps): (usize, usize),
    horizon: f64,
) -> Outcome {
    let loaded = load(common)?;
    let sol = load_solution(solution, &loaded)?;
    let mut grid = GridParams::for_solution(&sol, grid_dx);
    if let Some(w) = window {
        grid.x_lo = w[0];
        grid.x_hi = w[1];
    }
    grid.n_controls = controls;
    grid.max_sweeps = max_sweeps;
    let opts = DeviationOptions {
        horizon,
        simulation: SimulationOptions {
            bias: bias.unwrap_or([0.0, 0.0]),
            ..SimulationOptions::default()
        },
        ..DeviationOptions::default()
    };
    let reports = ys
        .par_iter()
        .map(|&y| deviation_gap_with(&sol, y, &grid, &opts))
        .collect::<Result<Vec<_>, Error>>()?;
    let reports: Vec<_> = reports.into_iter().flatten().collect();

    println!(
        "{:>12} {:>6} {:>16} {:>16} {:>12} {:>10}  status",
        "y", "player", "nash_cost", "best_response", "gap", "tolerance"
    );
    for r in &reports {
        let status = if r.within_tolerance() { "ok" } else { "flagged" };
        println!(
            "{:>12} {:>6} {:>16.9} {:>16.9} {:>12.3e} {:>10.2e}  {status}",
            r.y, r.player, r.nash_cost, r.best_response_value, r.gap, r.tolerance
        );
        if let Some(w) = &r.warning {
            println!("  warning: {w}");
        }
    }
    let mut run = open_run(common, &loaded)?;
    run.write_json("deviation.json", &reports).map_err(Failure::io)?;
    finish(
        run,
        "verify",
        &loaded,
        json!({
            "solution_sha256": sha256_hex(&fs::read(solution).map_err(Failure::io)?),
            "y": ys, "feedback_bias": opts.simulation.bias, "horizon": horizon,
        }),
        json!(grid),
    )
}

fn simulate(common: &Common, solution: &Path, y: f64, horizon: f64, bias: Option<[f64; 2]>) -> Outcome {
    let loaded = load(common)?;
    let sol = load_solution(solution, &loaded)?;
    let opts = SimulationOptions {
        bias: bias.unwrap_or([0.0, 0.0]),
        ..SimulationOptions::default()
    };
    let run_data = simulate_closed_loop_with(&sol, y, horizon, &opts)?;
    println!(
        "J1 = {:.12}, J2 = {:.12} ({} samples{})",
        run_data.costs[0],
        run_data.costs[1],
        run_data.trajectory.len(),
        match run_data.settled {
            Some(s) => format!(", at rest at x = {} from t = {}", s.x, s.t),
            None => String::new(),
        }
    );
    let mut csv = Vec::new();
    run_data.write_csv(&mut csv).map_err(Failure::io)?;
    let mut run = open_run(common, &loaded)?;
    run.write("trajectory.csv", &csv).map_err(Failure::io)?;
    run.write_json("closed_loop.json", &run_data).map_err(Failure::io)?;
    finish(
        run,
        "simulate",
        &loaded,
        json!({
            "solution_sha256": sha256_hex(&fs::read(solution).map_err(Failure::io)?),
            "y": y, "horizon": horizon, "feedback_bias": opts.bias,
        }),
        json!(opts.max_dt),
    )
}

#[derive(Serialize)]
struct Polyline {
    piece_index: usize,
    points: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Marker {
    label: String,
    p: [f64; 2],
}

fn phase_data(sol: &AdmissibleSolution) -> (Vec<Polyline>, Vec<Marker>) {
    let lines = sol
        .pieces
        .iter()
        .enumerate()
        .map(|(i, pc)| Polyline {
            piece_index: i,
            points: match pc {
                Piece::Constant { p, .. } => vec![*p],
                Piece::Sampled { samples, .. } => samples.iter().map(|s| s.p).collect(),
            },
        })
        .collect();
    let mut markers = vec![Marker {
        label: "origin".into(),
        p: [0.0, 0.0],
    }];
    let slopes: Vec<[f64; 2]> = match &sol.costs {
        Costs::Piecewise(raw) => raw.slopes.clone(),
        Costs::Periodic(pc) => vec![pc.k0, pc.k1],
    };
    for (j, k) in slopes.into_iter().enumerate() {
        markers.push(Marker {
            label: format!("K{j}"),
            p: k,
        });
    }
    (lines, markers)
}

fn export(
    common: &Common,
    solution: &Path,
    format: ExportFormat,
    window: Option<[f64; 2]>,
    grid_dx: Option<f64>,
) -> Outcome {
    let loaded = load(common)?;
    let sol = load_solution(solution, &loaded)?;
    let t = &sol.admissibility.tolerances;
    let window = window.unwrap_or(t.window);
    let dx = grid_dx.unwrap_or(t.grid_dx);
    if !(window[0] < window[1] && dx > 0.0) {
        return Err(Failure::usage("window must satisfy lo < hi and the grid step must be positive"));
    }
    let (lines, markers) = phase_data(&sol);
    let mut run = open_run(common, &loaded)?;
    match format {
        ExportFormat::Csv => {
            let mut csv = Vec::new();
            sol.write_csv(&mut csv, window, dx).map_err(Failure::io)?;
            run.write("profile.csv", &csv).map_err(Failure::io)?;
            let mut phase = String::from("piece_index,p1,p2\n");
            for l in &lines {
                for p in &l.points {
                    phase.push_str(&format!("{},{},{}\n", l.piece_index, p[0], p[1]));
                }
            }
            run.write("phase.csv", phase.as_bytes()).map_err(Failure::io)?;
            let mut mk = String::from("label,p1,p2\n");
            for m in &markers {
                mk.push_str(&format!("{},{},{}\n", m.label, m.p[0], m.p[1]));
            }
            run.write("markers.csv", mk.as_bytes()).map_err(Failure::io)?;
        }
        ExportFormat::SvgData => {
            let rows = sol.profile(window, dx)?;
            let profile = json!({
                "x": rows.iter().map(|r| r.x).collect::<Vec<_>>(),
                "p1": rows.iter().map(|r| r.p[0]).collect::<Vec<_>>(),
                "p2": rows.iter().map(|r| r.p[1]).collect::<Vec<_>>(),
                "u1": rows.iter().map(|r| r.u[0]).collect::<Vec<_>>(),
                "u2": rows.iter().map(|r| r.u[1]).collect::<Vec<_>>(),
            });
            run.write_json(
                "plot.json",
                &json!({ "phase_polylines": lines, "markers": markers, "profile": profile }),
            )
            .map_err(Failure::io)?;
        }
    }
    println!("exported {} piece(s) as {:?}", sol.pieces.len(), format);
    finish(
        run,
        "export",
        &loaded,
        json!({ "format": format, "window": window, "grid_dx": dx }),
        json!({}),
    )
}
