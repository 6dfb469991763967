//! Experiment orchestration.
//!
//! [`run_experiment`] takes a parsed configuration end to end: resolve and
//! validate, sample the initial datum, integrate, then write every artifact
//! into a fresh run directory —
//!
//! ```text
//! <output.dir>/<hash12>-NNN/
//!     rows.csv                      one line per stored snapshot
//!     summary.txt                   key = value pairs plus check outcomes
//!     checkpoints/final.ckpt        exact final state
//!     checkpoints/step_*.ckpt       every 50th stored snapshot
//!     profile_omega0.ckpt           terminal profile (deep runs only)
//!     profile_predicted_final.ckpt  closed-form field at the final time
//! ```
//!
//! Run directories are append-only: each invocation claims the first free
//! `NNN` suffix and never touches existing ones, so two runs of the same
//! configuration can be compared byte for byte. A stepper abort does not
//! become an `Err`: it is recorded as a structured failure (status, error
//! text, failed checks) so batch callers can keep going.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use dnls_core::integrator::{ledger_residual, run, run_with_carry};
use dnls_core::profile::{
    L2RateReport, ProfileErrorReport, SupLimitReport, build_profiles, l2_rate_check,
    magnitude_identity_residual, profile_error, profile_l2_series, sup_limit_check,
};
use dnls_core::seminorm::{MonitorReport, SeminormTable, monitors, seminorms};
use dnls_core::{Equation, Field, ProfileSet, Trajectory, fit_loglog, sigma_schedule};

use crate::checkpoint::CheckpointData;
use crate::config::{ExperimentConfig, Resolved};
use crate::initial::make_initial_data;
use crate::record::{CheckOutcome, RowWriter, RunRecord, SnapshotRow, write_summary};
use crate::{HarnessError, Result};

/// Every check a configuration may request.
pub const CHECK_NAMES: &[&str] = &[
    "mass_balance",
    "magnitude_identity",
    "monitors_bounded",
    "tail_resolved",
    "sup_limit",
    "l2_rate",
    "profile_error_law",
];

/// Window of `1 - b t` over which the profile-error rate is fitted.
pub const PROFILE_WINDOW: (f64, f64) = (2e-3, 1e-2);

/// A checkpoint file is kept for every this-many stored snapshots.
pub const CHECKPOINT_EVERY: usize = 50;

/// Everything the post-run checks look at. Unavailable analyses carry the
/// reason, so a failed check can say *why* instead of just "no".
struct Analysis {
    tables: Vec<SeminormTable>,
    monitor: std::result::Result<MonitorReport, String>,
    ledger: Vec<(f64, f64)>,
    ledger_max: f64,
    /// Per-snapshot magnitude-identity residual; `Err` when the quadrature
    /// was not tracked or the run is not dissipative-rescaled.
    magnitude: std::result::Result<Vec<(f64, f64)>, String>,
    magnitude_max: Option<f64>,
    sup: std::result::Result<SupLimitReport, String>,
    l2: std::result::Result<L2RateReport, String>,
    /// Closed-form route to the L2 exponent, fitted over the same snapshots
    /// as the solver route.
    route_exponent: std::result::Result<f64, String>,
    perr: std::result::Result<ProfileErrorReport, String>,
    profile_files: bool,
}

/// Claim the first free `<hash12>-NNN` directory under `base`. Creation is
/// atomic, so parallel workers racing for the same configuration each get
/// their own directory.
pub fn allocate_run_dir(base: &Path, hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(base)?;
    let short = &hash[..12.min(hash.len())];
    for i in 1..=9999u32 {
        let candidate = base.join(format!("{short}-{i:03}"));
        match std::fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(HarnessError::Config(format!(
        "no free run directory under {} for {short}",
        base.display()
    )))
}

/// Run a configuration from its initial datum.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let resolved = cfg.resolve()?;
    let data = make_initial_data(
        &cfg.initial,
        &resolved.grid,
        &resolved.idx,
        cfg.seed,
        cfg.theorem_mode,
    )?;
    let run_dir = allocate_run_dir(Path::new(&cfg.output.dir), &resolved.hash)?;
    execute(cfg, &resolved, run_dir, data.field, data.k_value, None)
}

/// Continue a run from a checkpoint under the same configuration. The grid
/// must match, the checkpoint time must precede the horizon, and a plan that
/// tracks the amplitude quadrature refuses a checkpoint without one.
pub fn resume_experiment(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<RunRecord> {
    let resolved = cfg.resolve()?;
    let ck = CheckpointData::read(ckpt_path)?;
    let ck_grid = ck.grid()?;
    if ck_grid != resolved.grid {
        return Err(HarnessError::Checkpoint(format!(
            "checkpoint grid (dim {}, L {}, {} points) does not match the \
             configuration (dim {}, L {}, {} points)",
            ck_grid.dim(),
            ck_grid.half_width(),
            ck_grid.points(),
            resolved.grid.dim(),
            resolved.grid.half_width(),
            resolved.grid.points()
        )));
    }
    if !(ck.time >= 0.0 && ck.time < resolved.plan.t_end) {
        return Err(HarnessError::Checkpoint(format!(
            "checkpoint time {} is outside [0, t_end = {})",
            ck.time, resolved.plan.t_end
        )));
    }
    let p = &resolved.params;
    let tracks = resolved.plan.track_f.unwrap_or(
        resolved.plan.equation == Equation::Rescaled && p.b > 0.0 && p.lambda.re < 0.0,
    );
    if tracks && ck.f_quadrature.is_none() {
        return Err(HarnessError::Checkpoint(
            "the plan tracks the amplitude quadrature but the checkpoint \
             carries none"
                .into(),
        ));
    }
    let field = ck.field()?;
    let run_dir = allocate_run_dir(Path::new(&cfg.output.dir), &resolved.hash)?;
    let note = ckpt_path.display().to_string();
    execute(cfg, &resolved, run_dir, field, None, Some((ck.carry(), note)))
}

fn execute(
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    run_dir: PathBuf,
    v0: Field,
    k_value: Option<f64>,
    carry: Option<(dnls_core::Carry, String)>,
) -> Result<RunRecord> {
    let rows_path = run_dir.join("rows.csv");
    let summary_path = run_dir.join("summary.txt");
    let (carry_state, resumed_from) = match carry {
        Some((c, note)) => (Some(c), Some(note)),
        None => (None, None),
    };

    let traj_res = match carry_state {
        Some(c) => run_with_carry(&v0, &resolved.plan, &resolved.params, c),
        None => run(&v0, &resolved.plan, &resolved.params),
    };

    let traj = match traj_res {
        Ok(t) => t,
        Err(e) => {
            // Structured failure: header-only rows, a summary that names the
            // error, and every requested check marked failed.
            RowWriter::create(&rows_path, &resolved.idx)?.finish()?;
            let mut pairs = vec![
                ("status".to_string(), "aborted".to_string()),
                ("config_hash".to_string(), resolved.hash.clone()),
                ("error".to_string(), e.to_string()),
            ];
            if let Some(src) = &resumed_from {
                pairs.push(("resumed_from".to_string(), src.clone()));
            }
            let checks: Vec<CheckOutcome> = cfg
                .checks
                .iter()
                .map(|n| CheckOutcome {
                    name: n.clone(),
                    passed: false,
                    detail: format!("run aborted: {e}"),
                })
                .collect();
            for c in &checks {
                pairs.push((format!("check_{}", c.name), format!("fail ({})", c.detail)));
            }
            write_summary(&summary_path, &pairs)?;
            return Ok(RunRecord {
                config_hash: resolved.hash.clone(),
                run_dir,
                rows_path,
                summary_path,
                checks,
                summary: pairs,
                failure: Some(e.to_string()),
            });
        }
    };

    let analysis = analyze(&traj, resolved, &run_dir)?;
    write_rows(&rows_path, resolved, &traj, &analysis)?;
    write_checkpoints(&run_dir, &traj)?;

    let checks = evaluate_checks(cfg, resolved, &analysis);
    let mut pairs = build_summary(cfg, resolved, &traj, &analysis, k_value, resumed_from);
    for c in &checks {
        pairs.push((
            format!("check_{}", c.name),
            format!("{} ({})", if c.passed { "pass" } else { "fail" }, c.detail),
        ));
    }
    write_summary(&summary_path, &pairs)?;

    Ok(RunRecord {
        config_hash: resolved.hash.clone(),
        run_dir,
        rows_path,
        summary_path,
        checks,
        summary: pairs,
        failure: None,
    })
}

fn analyze(traj: &Trajectory, resolved: &Resolved, run_dir: &Path) -> Result<Analysis> {
    let p = &resolved.params;
    let idx = &resolved.idx;

    let monitor = sigma_schedule(idx, p)
        .and_then(|sched| monitors(traj, &sched, idx))
        .map_err(|e| e.to_string());
    let tables = match &monitor {
        Ok(rep) => rep.tables.clone(),
        Err(_) => traj
            .snapshots
            .iter()
            .map(|s| seminorms(&s.field, idx))
            .collect::<dnls_core::Result<Vec<_>>>()?,
    };

    let ledger = ledger_residual(traj);
    let ledger_max = ledger.iter().fold(0.0f64, |a, &(_, r)| a.max(r));

    let dissipative_rescaled =
        traj.plan.equation == Equation::Rescaled && p.b > 0.0 && p.lambda.re < 0.0;

    let magnitude = if dissipative_rescaled && traj.tracked_f {
        magnitude_identity_residual(traj).map_err(|e| e.to_string())
    } else {
        Err("needs a tracked dissipative rescaled run".to_string())
    };
    let magnitude_max = magnitude
        .as_ref()
        .ok()
        .map(|v| v.iter().fold(0.0f64, |a, &(_, r)| a.max(r)));

    let sup = sup_limit_check(traj, p).map_err(|e| e.to_string());
    let l2 = l2_rate_check(traj, p, idx).map_err(|e| e.to_string());

    let s_final = 1.0 - p.b * traj.last().time();
    let deep = dissipative_rescaled && traj.tracked_f && s_final <= 1e-2 * (1.0 + 1e-9);
    let (route_exponent, perr, profile_files) = if deep {
        match build_profiles(traj, p) {
            Ok(prof) => {
                write_profile_files(run_dir, traj, &prof)?;
                let route = profile_route_exponent(traj, &prof).map_err(|e| e.to_string());
                let perr =
                    profile_error(traj, &prof, idx, PROFILE_WINDOW).map_err(|e| e.to_string());
                (route, perr, true)
            }
            Err(e) => {
                let msg = e.to_string();
                (Err(msg.clone()), Err(msg), false)
            }
        }
    } else {
        let why = if dissipative_rescaled {
            format!(
                "profile analysis needs a tracked run reaching 1 - b t <= 1e-2 \
                 (final value {s_final:.3e})"
            )
        } else {
            "profile analysis needs a dissipative rescaled run".to_string()
        };
        (Err(why.clone()), Err(why), false)
    };

    Ok(Analysis {
        tables,
        monitor,
        ledger,
        ledger_max,
        magnitude,
        magnitude_max,
        sup,
        l2,
        route_exponent,
        perr,
        profile_files,
    })
}

/// Fit the closed-form L2 route over exactly the snapshots the solver-route
/// fit uses (the last decade of `1 - b t`), so the two exponents differ only
/// by what the routes themselves disagree on.
fn profile_route_exponent(traj: &Trajectory, prof: &ProfileSet) -> dnls_core::Result<f64> {
    let b = prof.params().b;
    let s_min = 1.0 - b * traj.last().time();
    let times: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| s.time())
        .filter(|&t| {
            let s = 1.0 - b * t;
            s <= 10.0 * s_min && s >= s_min * (1.0 - 1e-12)
        })
        .collect();
    let series = profile_l2_series(prof, &times)?;
    let pts: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (1.0 - b * t, v)).collect();
    Ok(fit_loglog(&pts)?.exponent)
}

fn write_profile_files(run_dir: &Path, traj: &Trajectory, prof: &ProfileSet) -> Result<()> {
    let grid = traj.initial().field.grid();
    let t_f = traj.last().time();
    CheckpointData::from_fields(grid, t_f, prof.omega0().to_vec(), Some(prof.f0().to_vec()))
        .write(&run_dir.join("profile_omega0.ckpt"))?;
    let predicted = prof.predicted(t_f)?;
    CheckpointData::from_fields(grid, t_f, predicted, None)
        .write(&run_dir.join("profile_predicted_final.ckpt"))?;
    Ok(())
}

fn write_rows(
    rows_path: &Path,
    resolved: &Resolved,
    traj: &Trajectory,
    analysis: &Analysis,
) -> Result<()> {
    let p = &resolved.params;
    let rescaled = traj.plan.equation == Equation::Rescaled && p.b > 0.0;
    let mut w = RowWriter::create(rows_path, &resolved.idx)?;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let t = snap.time();
        let row = SnapshotRow {
            t,
            one_minus_bt: if rescaled { 1.0 - p.b * t } else { 1.0 },
            sup_norm: snap.field.sup_norm(),
            l2_norm: snap.field.l2_norm(),
            table: &analysis.tables[i],
            psi_inst: analysis
                .monitor
                .as_ref()
                .map(|r| r.per_snapshot_psi[i].1)
                .unwrap_or(f64::NAN),
            ledger_residual: analysis.ledger[i].1,
            magnitude_residual: analysis
                .magnitude
                .as_ref()
                .map(|v| v[i].1)
                .unwrap_or(f64::NAN),
        };
        w.write_row(&row)?;
    }
    w.finish()?;
    Ok(())
}

fn write_checkpoints(run_dir: &Path, traj: &Trajectory) -> Result<()> {
    let ck_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir)?;
    let grid = traj.initial().field.grid();
    let last_i = traj.snapshots.len() - 1;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        if i > 0 && i < last_i && i % CHECKPOINT_EVERY == 0 {
            CheckpointData::from_snapshot(grid, snap, traj.tracked_f)
                .write(&ck_dir.join(format!("step_{:08}.ckpt", snap.step)))?;
        }
    }
    CheckpointData::from_snapshot(grid, traj.last(), traj.tracked_f)
        .write(&ck_dir.join("final.ckpt"))?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6e}")
}

fn build_summary(
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    traj: &Trajectory,
    analysis: &Analysis,
    k_value: Option<f64>,
    resumed_from: Option<String>,
) -> Vec<(String, String)> {
    let p = &resolved.params;
    let last = traj.last();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| pairs.push((k.to_string(), v));

    put("status", "completed".into());
    put("config_hash", resolved.hash.clone());
    if let Some(src) = resumed_from {
        put("resumed_from", src);
    }
    put(
        "equation",
        match traj.plan.equation {
            Equation::Rescaled => "rescaled".into(),
            Equation::Autonomous => "autonomous".into(),
        },
    );
    put("family", cfg.initial.family.to_string());
    put("seed", cfg.seed.to_string());
    put(
        "k_value",
        k_value.map(fmt_f).unwrap_or_else(|| "n/a".into()),
    );
    put(
        "grid",
        format!(
            "dim {}, half_width {}, points {}",
            resolved.grid.dim(),
            resolved.grid.half_width(),
            resolved.grid.points()
        ),
    );
    put("steps", traj.steps.to_string());
    put("snapshots", traj.snapshots.len().to_string());
    put("t_final", fmt_f(last.time()));
    if traj.plan.equation == Equation::Rescaled && p.b > 0.0 {
        put("one_minus_bt_final", fmt_f(1.0 - p.b * last.time()));
    }
    put("sup_final", fmt_f(last.field.sup_norm()));
    put("l2_final", fmt_f(last.field.l2_norm()));
    put("ledger_max", fmt_f(analysis.ledger_max));
    put(
        "magnitude_max",
        analysis
            .magnitude_max
            .map(fmt_f)
            .unwrap_or_else(|| "n/a".into()),
    );
    match &analysis.monitor {
        Ok(rep) => {
            put("psi_t", fmt_f(rep.psi_t));
            put("bound_4k_ok", rep.bound_4k_ok.to_string());
        }
        Err(why) => put("monitors", format!("unavailable: {why}")),
    }
    let worst_tail = analysis
        .tables
        .iter()
        .fold(0.0f64, |a, t| a.max(t.tail_ratio));
    put("tail_ratio_worst", fmt_f(worst_tail));
    put(
        "tail_ok_all",
        analysis.tables.iter().all(|t| t.tail_ok).to_string(),
    );
    match &analysis.sup {
        Ok(r) => {
            put("sup_target", fmt_f(r.target));
            put("sup_final_deviation", fmt_f(r.final_deviation));
            if let Some(f) = &r.fit {
                put("sup_trend_exponent", fmt_f(f.exponent));
            }
        }
        Err(why) => put("sup_limit", format!("unavailable: {why}")),
    }
    match &analysis.l2 {
        Ok(r) => {
            put("l2_target", fmt_f(r.target));
            if let Some(f) = &r.fit {
                put("l2_fit_exponent", fmt_f(f.exponent));
                put("l2_fit_r2", fmt_f(f.r2));
            }
        }
        Err(why) => put("l2_rate", format!("unavailable: {why}")),
    }
    match &analysis.route_exponent {
        Ok(e) => put("l2_route_exponent", fmt_f(*e)),
        Err(why) => put("l2_route", format!("unavailable: {why}")),
    }
    match &analysis.perr {
        Ok(r) => {
            if let Some(f) = &r.fit {
                put("profile_error_exponent", fmt_f(f.exponent));
                put("profile_error_r2", fmt_f(f.r2));
                put("profile_error_points", f.points.to_string());
            } else {
                put("profile_error", "degenerate in the fit window".into());
            }
        }
        Err(why) => put("profile_error", format!("unavailable: {why}")),
    }
    if analysis.profile_files {
        put(
            "profile_fields",
            "profile_omega0.ckpt, profile_predicted_final.ckpt".into(),
        );
    }
    pairs
}

fn evaluate_checks(
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    analysis: &Analysis,
) -> Vec<CheckOutcome> {
    let p = &resolved.params;
    cfg.checks
        .iter()
        .map(|name| {
            let (passed, detail) = match name.as_str() {
                "mass_balance" => {
                    let tol = if p.lambda.re == 0.0 { 1e-8 } else { 1e-6 };
                    (
                        analysis.ledger_max < tol,
                        format!(
                            "max ledger residual {:.3e}, tolerance {tol:.0e}",
                            analysis.ledger_max
                        ),
                    )
                }
                "magnitude_identity" => match analysis.magnitude_max {
                    Some(m) => (
                        m < 1e-3,
                        format!("max inner residual {m:.3e}, tolerance 1e-3"),
                    ),
                    None => (
                        false,
                        analysis
                            .magnitude
                            .as_ref()
                            .err()
                            .cloned()
                            .unwrap_or_default(),
                    ),
                },
                "monitors_bounded" => match &analysis.monitor {
                    Ok(r) => (
                        r.bound_4k_ok,
                        format!("psi_T {:.6e} vs 4K = {:.6e}", r.psi_t, 4.0 * p.k_bound),
                    ),
                    Err(why) => (false, format!("monitors unavailable: {why}")),
                },
                "tail_resolved" => {
                    let worst = analysis
                        .tables
                        .iter()
                        .fold(0.0f64, |a, t| a.max(t.tail_ratio));
                    (
                        analysis.tables.iter().all(|t| t.tail_ok),
                        format!("worst spectral tail ratio {worst:.3e}"),
                    )
                }
                "sup_limit" => match &analysis.sup {
                    Ok(r) => {
                        let trend = r.fit.as_ref().map(|f| f.exponent);
                        let ok = r.final_deviation < 0.15
                            && trend.map_or(false, |e| e > 0.0);
                        (
                            ok,
                            format!(
                                "final deviation {:.2}% (target < 15%), trend exponent {}",
                                100.0 * r.final_deviation,
                                trend
                                    .map(|e| format!("{e:.3}"))
                                    .unwrap_or_else(|| "unavailable".into())
                            ),
                        )
                    }
                    Err(why) => (false, why.clone()),
                },
                "l2_rate" => {
                    match (&analysis.l2, &analysis.route_exponent) {
                        (Ok(r), route) => match &r.fit {
                            Some(f) => {
                                let within =
                                    (f.exponent - r.target).abs() <= 0.3 * r.target.abs();
                                match route {
                                    Ok(route_e) => {
                                        let gap = (f.exponent - route_e).abs();
                                        (
                                            within && gap <= 5e-3,
                                            format!(
                                                "fit {:.5} vs target {:.5} (±30%), \
                                                 route gap {gap:.2e} (tolerance 5e-3)",
                                                f.exponent, r.target
                                            ),
                                        )
                                    }
                                    Err(why) => {
                                        (false, format!("closed-form route unavailable: {why}"))
                                    }
                                }
                            }
                            None => (false, "decay fit degenerate".into()),
                        },
                        (Err(why), _) => (false, why.clone()),
                    }
                }
                "profile_error_law" => match &analysis.perr {
                    Ok(r) => match &r.fit {
                        Some(f) => (
                            f.exponent >= 0.4,
                            format!(
                                "error exponent {:.3} over 1 - b t in [{:.0e}, {:.0e}] \
                                 (need >= 0.4), r2 {:.3}",
                                f.exponent, PROFILE_WINDOW.0, PROFILE_WINDOW.1, f.r2
                            ),
                        ),
                        None => (false, "profile-error fit degenerate".into()),
                    },
                    Err(why) => (false, why.clone()),
                },
                other => (false, format!("unknown check '{other}'")),
            };
            CheckOutcome {
                name: name.clone(),
                passed,
                detail,
            }
        })
        .collect()
}
