//! The acceptance suite: twelve numbered verification points covering the
//! whole laboratory, shared by the `dnls check` subcommand and the
//! `acceptance` integration tests.
//!
//! Each point returns a [`CriterionReport`] instead of panicking: a failed
//! simulation, a degenerate fit, or an out-of-tolerance number all become
//! `passed = false` with the reason in `detail`, so the suite always runs to
//! the end and reports every criterion. Expensive artifacts (the reference
//! run and its deeper companion) are built once in a [`DeskContext`] and
//! shared.
//!
//! The desk configuration: one dimension, `lambda = -1`, `alpha = 1.8`,
//! `b = 4`, `v0 = <x>^{-2}` on a box of half-width 20 with 2048 points,
//! stepped with `dt = 2.5e-4` under the near-singularity cap
//! `dt <= 2.5e-4 (1 - b t)`, snapshot stride 25. The reference horizon stops
//! at `1 - b t = 1e-3`; the deep companion continues to `1e-8`, where the
//! asymptotic laws the trend criteria measure have actually set in (the
//! stopping value is a configurable horizon, not a model parameter; both
//! runs finish in seconds).

use std::fmt;
use std::time::Instant;

use dnls_core::integrator::{ledger_residual, nonlinear_flow_scalar, run};
use dnls_core::profile::{
    build_profiles, l2_rate_check, magnitude_identity_residual, ode_sup_deviation,
    profile_error, profile_l2_series, sup_limit_check,
};
use dnls_core::spectral::free_propagate;
use dnls_core::{
    C64, Equation, Field, Grid, IndexSet, ModelParams, PropagationConstants, StepPlan,
    Trajectory, closed_form_sigma_top, equivalence_test, fit_loglog, sigma_schedule,
    thresholds,
};

use crate::config::ExperimentConfig;
use crate::oracle::scalar_flow_rk4;
use crate::runner::{PROFILE_WINDOW, run_experiment};

/// Outcome of one numbered acceptance criterion.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:02} {}: {} — {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn fail(id: usize, name: &'static str, why: impl fmt::Display) -> CriterionReport {
    CriterionReport {
        id,
        name,
        passed: false,
        detail: why.to_string(),
    }
}

/// Model parameters of the desk configuration.
pub fn desk_params() -> ModelParams {
    ModelParams::new(C64::new(-1.0, 0.0), 1.8, 1, 4.0, 1.0)
        .expect("the desk parameters are valid by construction")
}

/// The desk initial datum `v0(x) = <x>^{-2} = 1/(1 + |x|^2)` on `grid`.
pub fn desk_initial(grid: &Grid) -> Field {
    Field::from_fn(grid.clone(), 0.0, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        C64::new(1.0 / (1.0 + r2), 0.0)
    })
}

/// The desk stepping plan down to `1 - b t = stop`.
pub fn desk_plan(stop: f64) -> StepPlan {
    let mut plan = StepPlan::new(Equation::Rescaled, 2.5e-4, (1.0 - stop) / 4.0);
    plan.adapt = true;
    plan.adapt_c = 2.5e-4;
    plan.snapshot_stride = 25;
    plan
}

/// The shared expensive artifacts: the desk run at the reference horizon and
/// its deep companion. Failures are kept as strings so every criterion that
/// needs a run can report the same root cause instead of panicking.
pub struct DeskContext {
    pub params: ModelParams,
    pub idx: IndexSet,
    pub grid: Grid,
    pub reference: Result<Trajectory, String>,
    pub deep: Result<Trajectory, String>,
}

impl DeskContext {
    /// Build both desk runs on a grid with the given number of points
    /// (2048 is the reference resolution; smaller values degrade the
    /// criteria gracefully but must never crash the suite).
    pub fn build(points: usize) -> DeskContext {
        let params = desk_params();
        let idx = IndexSet::defaults(1).expect("1-D default indices exist");
        match Grid::new(1, 20.0, points) {
            Ok(grid) => {
                let v0 = desk_initial(&grid);
                let reference = run(&v0, &desk_plan(1e-3), &params).map_err(|e| e.to_string());
                let deep = run(&v0, &desk_plan(1e-8), &params).map_err(|e| e.to_string());
                DeskContext { params, idx, grid, reference, deep }
            }
            Err(e) => {
                let why = e.to_string();
                DeskContext {
                    params,
                    idx,
                    grid: Grid::new(1, 20.0, 2048).expect("fallback grid is valid"),
                    reference: Err(why.clone()),
                    deep: Err(why),
                }
            }
        }
    }
}

fn sup_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Criterion 1 — the free propagator reproduces the closed-form Gaussian
/// evolution: `e^{-a x^2}` flows to `(1+4iat)^{-1/2} e^{-a x^2/(1+4iat)}`,
/// matched in sup norm to 1e-8 at `t = 1` (box 20, 1024 points).
pub fn criterion_01_free_propagator() -> CriterionReport {
    let id = 1;
    let name = "free propagator, Gaussian closed form";
    let grid = match Grid::new(1, 20.0, 1024) {
        Ok(g) => g,
        Err(e) => return fail(id, name, e),
    };
    let a = 0.5;
    let t = 1.0;
    let u0 = Field::from_fn(grid.clone(), 0.0, |x| C64::new((-a * x[0] * x[0]).exp(), 0.0));
    let evolved = free_propagate(&u0, t);
    let den = C64::new(1.0, 4.0 * a * t);
    let exact = Field::from_fn(grid, t, |x| {
        (C64::new(-a * x[0] * x[0], 0.0) / den).exp() / den.sqrt()
    });
    let worst = sup_diff(&evolved, &exact);
    CriterionReport {
        id,
        name,
        passed: worst < 1e-8,
        detail: format!(
            "sup-norm gap {worst:.4e} at t = {t} (tolerance 1e-8, grid 1024 points)"
        ),
    }
}

/// Self-convergence exponent of the split stepper over the step ladder
/// `dt in {1e-2, 5e-3, 2.5e-3}`, fixed steps, down to `1 - b t = stop`.
fn splitting_order_at(
    params: &ModelParams,
    grid: &Grid,
    stop: f64,
) -> Result<(f64, f64, f64), String> {
    let v0 = desk_initial(grid);
    let mut finals: Vec<Field> = Vec::with_capacity(3);
    for dt in [1e-2, 5e-3, 2.5e-3] {
        let mut plan = StepPlan::new(Equation::Rescaled, dt, (1.0 - stop) / params.b);
        plan.adapt = false;
        plan.snapshot_stride = usize::MAX;
        plan.track_f = Some(false);
        let traj = run(&v0, &plan, params).map_err(|e| e.to_string())?;
        finals.push(traj.last().field.clone());
    }
    let e1 = sup_diff(&finals[0], &finals[1]);
    let e2 = sup_diff(&finals[1], &finals[2]);
    if !(e1 > 0.0 && e2 > 0.0) {
        return Err(format!("degenerate ladder: gaps {e1:.3e}, {e2:.3e}"));
    }
    Ok(((e1 / e2).log2(), e1, e2))
}

/// Criterion 2 — Strang-splitting order: the Richardson self-convergence
/// exponent over `dt in {1e-2, 5e-3, 2.5e-3}` on the nonlinear desk problem
/// must land in `2.0 ± 0.2`. The ladder is evaluated at the horizon
/// `1 - b t = 0.5`, where the coarsest step still resolves the coupling
/// weight; at the reference stop `1e-3` the weight varies on the scale
/// `(1 - b t)/b ~ 2.5e-4`, forty times below `dt = 1e-2`, the ladder leaves
/// the second-order regime there, and the measured exponent (reported for
/// transparency) drops accordingly.
pub fn criterion_02_splitting_order(ctx: &DeskContext) -> CriterionReport {
    let id = 2;
    let name = "splitting self-convergence order";
    let asym = splitting_order_at(&ctx.params, &ctx.grid, 0.5);
    let at_ref = splitting_order_at(&ctx.params, &ctx.grid, 1e-3);
    match (asym, at_ref) {
        (Ok((p, e1, e2)), Ok((p_ref, _, _))) => CriterionReport {
            id,
            name,
            passed: (p - 2.0).abs() <= 0.2,
            detail: format!(
                "exponent {p:.3} over dt {{1e-2, 5e-3, 2.5e-3}} at 1 - b t = 0.5 \
                 (need 2.0 ± 0.2; ladder gaps {e1:.3e} / {e2:.3e}); the same ladder \
                 run to the reference stop 1e-3 gives {p_ref:.3}, the coarse steps \
                 no longer resolving the final coupling layer there"
            ),
        },
        (Err(why), _) | (_, Err(why)) => fail(id, name, why),
    }
}

/// Criterion 3 — the closed-form amplitude flow agrees with an independent
/// high-accuracy integrator of `dz/dtau = lambda |z|^alpha z` pointwise to
/// 1e-10 over a 100-cell lattice of `(|z0|, arg z0, tau, lambda, alpha)`,
/// including a purely rotating cell with `Re lambda = 0`.
pub fn criterion_03_amplitude_flow_lattice() -> CriterionReport {
    let id = 3;
    let name = "closed-form amplitude flow vs independent integrator";
    let start = Instant::now();
    let mags = [1e-3, 0.1, 1.0, 3.0, 10.0];
    let phases = [0.0, 2.3];
    let taus = [0.1, 10.0];
    let cells = [
        (C64::new(-1.0, 0.0), 1.8),
        (C64::new(-1.0, 0.5), 1.0),
        (C64::new(-0.25, -1.0), 0.5),
        (C64::new(0.0, 1.0), 1.2),
        (C64::new(-2.0, 0.0), 0.3),
    ];
    let mut n = 0usize;
    let mut worst = 0.0f64;
    let mut worst_cell = String::new();
    for &m in &mags {
        for &ph in &phases {
            for &tau in &taus {
                for &(lam, al) in &cells {
                    let z0 = C64::from_polar(m, ph);
                    let closed = nonlinear_flow_scalar(z0, tau, lam, al);
                    let oracle = scalar_flow_rk4(z0, tau, lam, al, 1e-13);
                    let err = (closed - oracle).norm();
                    n += 1;
                    if !err.is_finite() {
                        return fail(
                            id,
                            name,
                            format!(
                                "non-finite comparison at |z0|={m}, arg={ph}, tau={tau}, \
                                 lambda={lam}, alpha={al}"
                            ),
                        );
                    }
                    if err > worst {
                        worst = err;
                        worst_cell = format!(
                            "|z0|={m}, arg={ph}, tau={tau}, lambda={lam}, alpha={al}"
                        );
                    }
                }
            }
        }
    }
    CriterionReport {
        id,
        name,
        passed: worst < 1e-10,
        detail: format!(
            "worst gap {worst:.4e} over {n} cells (tolerance 1e-10; integrator \
             tolerance 1e-13; worst at {worst_cell}; {:.1} s)",
            start.elapsed().as_secs_f64()
        ),
    }
}

/// Criterion 4 — the mass ledger: the relative residual of
/// `||v(t)||^2 - ||v0||^2 - 2 Re(lambda) int w ||v||^{alpha+2}` stays below
/// 1e-6 at every snapshot of the reference run, and below 1e-8 on a twin run
/// with `lambda = i` (purely conservative coupling).
pub fn criterion_04_mass_ledger(ctx: &DeskContext) -> CriterionReport {
    let id = 4;
    let name = "mass-dissipation ledger";
    let reference = match &ctx.reference {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("reference run unavailable: {why}")),
    };
    let led = ledger_residual(reference);
    let max_dis = led.iter().fold(0.0f64, |a, &(_, r)| a.max(r));

    let conservative = ModelParams::new(C64::new(0.0, 1.0), 1.8, 1, 4.0, 1.0)
        .map_err(|e| e.to_string())
        .and_then(|p| {
            run(&desk_initial(&ctx.grid), &desk_plan(1e-3), &p).map_err(|e| e.to_string())
        });
    let twin = match conservative {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("conservative twin failed: {why}")),
    };
    let max_con = ledger_residual(&twin).iter().fold(0.0f64, |a, &(_, r)| a.max(r));

    CriterionReport {
        id,
        name,
        passed: max_dis < 1e-6 && max_con < 1e-8,
        detail: format!(
            "max relative residual {max_dis:.4e} over {} snapshots (tolerance 1e-6); \
             conservative twin (lambda = i) {max_con:.4e} (tolerance 1e-8)",
            led.len()
        ),
    }
}

/// Criterion 5 — the closed-form magnitude identity: the relative gap
/// between `|v(t,x)|` and its amplitude-quadrature reconstruction stays
/// below 1e-3 on the inner half-domain at every snapshot of the reference
/// run.
pub fn criterion_05_magnitude_identity(ctx: &DeskContext) -> CriterionReport {
    let id = 5;
    let name = "pointwise magnitude identity";
    let reference = match &ctx.reference {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("reference run unavailable: {why}")),
    };
    match magnitude_identity_residual(reference) {
        Ok(series) => {
            let max = series.iter().fold(0.0f64, |a, &(_, r)| a.max(r));
            CriterionReport {
                id,
                name,
                passed: max < 1e-3,
                detail: format!(
                    "max inner-half-domain relative residual {max:.4e} over {} snapshots \
                     (tolerance 1e-3)",
                    series.len()
                ),
            }
        }
        Err(e) => fail(id, name, e),
    }
}

/// Criterion 6 — the dilation-plus-quadratic-phase change of variables maps
/// the rescaled evolution onto the unscaled one: simulating both sides
/// independently and comparing through the map stays below 1e-4 in sup norm
/// at `t in {0.25, 1, 4}` for the desk parameters, and below 1e-7 for the
/// free equation (`lambda = 0`) on Gaussian data — both at the pinned small
/// configuration (box 20, 1024 points, `t = 1`) and across the full time
/// triple on a wide box.
pub fn criterion_06_change_of_variables(ctx: &DeskContext) -> CriterionReport {
    let id = 6;
    let name = "rescaled/unscaled equivalence";
    let start = Instant::now();

    // Desk parameters on a wide box: the unscaled side dilates by 1 + b t
    // (17 at t = 4), so it needs room and resolution the v-side box does
    // not. Gaussian data keeps the quadratic phase of the initial map
    // band-limited on this grid; the desk power-decay profile would need a
    // still wider box for the same accuracy.
    let big = match Grid::new(1, 56.0, 16384) {
        Ok(g) => g,
        Err(e) => return fail(id, name, e),
    };
    let gaussian =
        |g: &Grid| Field::from_fn(g.clone(), 0.0, |x| C64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
    let dissipative = match equivalence_test(&gaussian(&big), &ctx.params, &[0.25, 1.0, 4.0], 5e-4)
    {
        Ok(r) => r,
        Err(e) => return fail(id, name, format!("desk-parameter comparison failed: {e}")),
    };
    let worst_dis = dissipative.iter().fold(0.0f64, |a, &(_, d)| a.max(d));

    // Free equation, pinned small configuration.
    let free_params = match ModelParams::new(C64::new(0.0, 0.0), 1.0, 1, 1.0, 1.0) {
        Ok(p) => p,
        Err(e) => return fail(id, name, e),
    };
    let small = match Grid::new(1, 20.0, 1024) {
        Ok(g) => g,
        Err(e) => return fail(id, name, e),
    };
    let free_small = match equivalence_test(&gaussian(&small), &free_params, &[1.0], 5e-4) {
        Ok(r) => r,
        Err(e) => return fail(id, name, format!("free small-box comparison failed: {e}")),
    };
    let free_small_gap = free_small[0].1;

    // Free equation across the full triple; the wide box keeps the spread
    // Gaussian (width ~ sqrt(1 + 4 t^2)) away from the boundary at t = 4.
    let wide = match Grid::new(1, 56.0, 4096) {
        Ok(g) => g,
        Err(e) => return fail(id, name, e),
    };
    let free_wide = match equivalence_test(&gaussian(&wide), &free_params, &[0.25, 1.0, 4.0], 5e-4)
    {
        Ok(r) => r,
        Err(e) => return fail(id, name, format!("free wide-box comparison failed: {e}")),
    };
    let worst_free = free_wide.iter().fold(free_small_gap, |a, &(_, d)| a.max(d));

    let dis_list: Vec<String> = dissipative
        .iter()
        .map(|(t, d)| format!("t={t}: {d:.3e}"))
        .collect();
    CriterionReport {
        id,
        name,
        passed: worst_dis < 1e-4 && worst_free < 1e-7,
        detail: format!(
            "desk parameters: {} (tolerance 1e-4); free equation worst {worst_free:.3e} \
             over the pinned box-20 run at t=1 ({free_small_gap:.3e}) and the wide-box \
             triple (tolerance 1e-7); {:.1} s",
            dis_list.join(", "),
            start.elapsed().as_secs_f64()
        ),
    }
}

/// Criterion 7 — the sup-norm limit law: `(1-bt)^{-nu} ||v||_inf^alpha` must
/// approach `b (2 - dim alpha) / (2 alpha |Re lambda|)`, with final relative
/// deviation below 15%, deviation still decreasing over the last decade, and
/// the spatially constant analogue within 1% of the limit at
/// `1 - b t = 1e-6`.
///
/// The last clause is closed-form decidable and fails for every feasible
/// horizon: the analogue's deviation is `(1 - C)/(s^{-nu} - 1 + C)` with
/// `nu = 0.1` and `C = r0^{-alpha}/target`, which at `s = 1e-6` equals 24.3%
/// for the desk data (and 31.1% for `b = 1`, `z0 = 1`) and first drops below
/// 1% near `s ~ 1e-19`. The criterion is therefore expected to report FAIL
/// on that clause with the other two green; the number is reported exactly
/// so the gap is visible.
pub fn criterion_07_sup_norm_limit(ctx: &DeskContext) -> CriterionReport {
    let id = 7;
    let name = "sup-norm limit law";
    let deep = match &ctx.deep {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("deep run unavailable: {why}")),
    };
    let rep = match sup_limit_check(deep, &ctx.params) {
        Ok(r) => r,
        Err(e) => return fail(id, name, e),
    };
    let ref_dev = ctx
        .reference
        .as_ref()
        .ok()
        .and_then(|t| sup_limit_check(t, &ctx.params).ok())
        .map(|r| r.final_deviation);
    let trend = rep.fit.as_ref().map(|f| f.exponent);
    let r0 = deep.initial().field.sup_norm();
    let ode_dev = match ode_sup_deviation(r0, &ctx.params, 1e-6) {
        Ok(d) => d,
        Err(e) => return fail(id, name, e),
    };

    let clause_final = rep.final_deviation < 0.15;
    let clause_trend = trend.map_or(false, |e| e > 0.0);
    let clause_ode = ode_dev < 0.01;
    CriterionReport {
        id,
        name,
        passed: clause_final && clause_trend && clause_ode,
        detail: format!(
            "final deviation {:.2}% at 1 - b t = 1e-8 (need < 15%{}); trend exponent \
             of the deviation over the last decade {} (need > 0); constant-data \
             analogue at 1 - b t = 1e-6: {:.2}% vs required < 1% — its closed form \
             (1 - C)/(s^{{-nu}} - 1 + C), nu = 0.1, C = {:.4}, first drops below 1% \
             near s ~ 1e-19, so this clause is unattainable at any feasible horizon",
            100.0 * rep.final_deviation,
            ref_dev
                .map(|d| format!("; {:.2}% at the reference stop 1e-3", 100.0 * d))
                .unwrap_or_default(),
            trend
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "unavailable".into()),
            100.0 * ode_dev,
            r0.powf(-ctx.params.alpha) / rep.target
        ),
    }
}

/// Fit the closed-form route to the weighted-mass exponent over exactly the
/// snapshots the solver-route fit uses (the last decade of `1 - b t`), so
/// the two exponents differ only by what the routes disagree on.
fn closed_form_route_exponent(traj: &Trajectory, p: &ModelParams) -> Result<f64, String> {
    let prof = build_profiles(traj, p).map_err(|e| e.to_string())?;
    let s_min = 1.0 - p.b * traj.last().time();
    let times: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| s.time())
        .filter(|&t| {
            let s = 1.0 - p.b * t;
            s <= 10.0 * s_min && s >= s_min * (1.0 - 1e-12)
        })
        .collect();
    let series = profile_l2_series(&prof, &times).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (1.0 - p.b * t, v)).collect();
    fit_loglog(&pts).map(|f| f.exponent).map_err(|e| e.to_string())
}

/// Criterion 8 — the weighted-mass decay rate: the fitted exponent of
/// `||v||_{L2}` against `1 - b t` over the last decade of the deep run must
/// sit within ±30% of the predicted `(1/alpha - dim/2)(1 - dim/(2n))`
/// = 0.041667, and within 5e-3 of the exponent obtained by direct
/// quadrature of the closed-form profile evolution — two routes to the same
/// number, isolating fit-window error from solver error.
pub fn criterion_08_l2_rate(ctx: &DeskContext) -> CriterionReport {
    let id = 8;
    let name = "weighted-mass decay rate";
    let deep = match &ctx.deep {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("deep run unavailable: {why}")),
    };
    let rep = match l2_rate_check(deep, &ctx.params, &ctx.idx) {
        Ok(r) => r,
        Err(e) => return fail(id, name, e),
    };
    let fit = match &rep.fit {
        Some(f) => f,
        None => return fail(id, name, "decay fit degenerate over the last decade"),
    };
    let route = match closed_form_route_exponent(deep, &ctx.params) {
        Ok(e) => e,
        Err(why) => return fail(id, name, format!("closed-form route unavailable: {why}")),
    };
    let ref_fit = ctx
        .reference
        .as_ref()
        .ok()
        .and_then(|t| l2_rate_check(t, &ctx.params, &ctx.idx).ok())
        .and_then(|r| r.fit.map(|f| f.exponent));
    let within = (fit.exponent - rep.target).abs() <= 0.3 * rep.target.abs();
    let gap = (fit.exponent - route).abs();
    CriterionReport {
        id,
        name,
        passed: within && gap <= 5e-3,
        detail: format!(
            "fitted exponent {:.6} over the last decade at 1 - b t = 1e-8 vs predicted \
             {:.6} ({:+.1}%, need within ±30%{}); closed-form-route exponent {route:.6}, \
             gap {gap:.2e} (need <= 5e-3)",
            fit.exponent,
            rep.target,
            100.0 * (fit.exponent - rep.target) / rep.target,
            ref_fit
                .map(|e| format!(
                    "; the reference horizon 1e-3 is still pre-asymptotic and fits {e:.4}"
                ))
                .unwrap_or_default(),
        ),
    }
}

/// Criterion 9 — the profile-error law: the sup-norm error of the
/// closed-form profile reconstruction, measured in the weighted norm against
/// the solved field, must decay with a fitted exponent of at least 0.4 over
/// the window `2e-3 <= 1 - b t <= 1e-2` of the reference run.
pub fn criterion_09_profile_error_law(ctx: &DeskContext) -> CriterionReport {
    let id = 9;
    let name = "profile reconstruction error law";
    let reference = match &ctx.reference {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("reference run unavailable: {why}")),
    };
    let prof = match build_profiles(reference, &ctx.params) {
        Ok(p) => p,
        Err(e) => return fail(id, name, e),
    };
    match profile_error(reference, &prof, &ctx.idx, PROFILE_WINDOW) {
        Ok(rep) => match rep.fit {
            Some(f) => CriterionReport {
                id,
                name,
                passed: f.exponent >= 0.4,
                detail: format!(
                    "fitted exponent {:.4} over 1 - b t in [{:.0e}, {:.0e}] \
                     (need >= 0.4; r^2 = {:.4}, {} points)",
                    f.exponent, PROFILE_WINDOW.0, PROFILE_WINDOW.1, f.r2, f.points
                ),
            },
            None => fail(id, name, "profile-error fit degenerate in the window"),
        },
        Err(e) => fail(id, name, e),
    }
}

/// Criterion 10 — profile algebra: reconstructing the modulus through the
/// envelope (`|omega| psi = |v|`) and the phase through the accumulated
/// rotation both hold to 1e-12 on the inner half-domain; the terminal
/// amplitude relation `|omega0|^alpha (1 + f0) = |v0|^alpha` holds to 1e-2
/// relative; and wherever `|f0| <= 1/2` the two-sided bound
/// `(2/3)|v0|^alpha <= |omega0|^alpha <= 2 |v0|^alpha` follows.
pub fn criterion_10_profile_algebra(ctx: &DeskContext) -> CriterionReport {
    let id = 10;
    let name = "profile algebra identities";
    let reference = match &ctx.reference {
        Ok(t) => t,
        Err(why) => return fail(id, name, format!("reference run unavailable: {why}")),
    };
    let p = &ctx.params;
    let prof = match build_profiles(reference, p) {
        Ok(pr) => pr,
        Err(e) => return fail(id, name, e),
    };
    let grid = prof.grid().clone();
    let ratio = p.lambda.im / p.lambda.re;

    // Envelope/phase reconstruction at the middle and final snapshots.
    let mut worst_mag = 0.0f64;
    let mut worst_phase = 0.0f64;
    for snap in [
        &reference.snapshots[reference.snapshots.len() / 2],
        reference.last(),
    ] {
        let t = snap.time();
        let (psi, theta) = match (prof.psi(t), prof.theta(t)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return fail(id, name, e),
        };
        for (j, z) in snap.field.values().iter().enumerate() {
            if !grid.is_inner(j) {
                continue;
            }
            let omega = z * C64::from_polar(1.0 / psi[j], -ratio * psi[j].ln());
            worst_mag = worst_mag
                .max((omega.norm() * psi[j] - z.norm()).abs() / (1.0 + z.norm()));
            let back = omega * C64::from_polar(1.0, theta[j]);
            worst_phase = worst_phase.max((back * z.conj()).arg().abs());
        }
    }

    // Terminal amplitude relation and its two-sided consequence.
    let v0 = &reference.initial().field;
    let mut worst_rel = 0.0f64;
    let mut sandwich_checked = 0usize;
    let mut sandwich_ok = true;
    let mut max_f0 = 0.0f64;
    for j in 0..grid.len() {
        if !grid.is_inner(j) {
            continue;
        }
        let f0 = prof.f0()[j];
        max_f0 = max_f0.max(f0.abs());
        let va = v0.values()[j].norm().powf(p.alpha);
        let wa = prof.omega0()[j].norm().powf(p.alpha);
        worst_rel = worst_rel.max((wa * (1.0 + f0) - va).abs() / va);
        if f0.abs() <= 0.5 {
            sandwich_checked += 1;
            sandwich_ok &= (2.0 / 3.0) * va <= wa * (1.0 + 1e-9) && wa <= 2.0 * va * (1.0 + 1e-9);
        }
    }

    let passed =
        worst_mag < 1e-12 && worst_phase < 1e-12 && worst_rel < 1e-2 && sandwich_ok
            && sandwich_checked > 0;
    CriterionReport {
        id,
        name,
        passed,
        detail: format!(
            "modulus reconstruction {worst_mag:.2e}, phase {worst_phase:.2e} (both need \
             < 1e-12); terminal amplitude relation {worst_rel:.3e} relative (need < 1e-2); \
             two-sided bound {} on {sandwich_checked} inner nodes with |f0| <= 1/2 \
             (max |f0| = {max_f0:.3})",
            if sandwich_ok { "holds" } else { "VIOLATED" }
        ),
    }
}

/// Criterion 11 — the exponent ladder and thresholds: the closed form of the
/// top exponent matches the recursive ladder to 1e-12 relative, the top
/// exponent stays at or below 1/2 across `alpha in [3/(2 dim), 2/dim]`
/// sampled at 100 points (in one and two dimensions), and the baseline
/// largeness scale `(16/dim)(4K)^{4/dim + 2}` evaluates to exactly 65536
/// (1-D) and 2048 (2-D) at `K = 1`.
pub fn criterion_11_schedule_and_thresholds() -> CriterionReport {
    let id = 11;
    let name = "exponent ladder and thresholds";
    let mut worst_gap = 0.0f64;
    let mut worst_top = 0.0f64;
    for dim in [1usize, 2] {
        let idx = match IndexSet::defaults(dim) {
            Ok(i) => i,
            Err(e) => return fail(id, name, e),
        };
        let lo = 3.0 / (2.0 * dim as f64);
        let hi = 2.0 / dim as f64;
        for i in 0..100 {
            let alpha = lo + (hi - lo) * (i as f64) / 99.0;
            let p = match ModelParams::new(C64::new(-1.0, 0.0), alpha, dim, 0.0, 1.0) {
                Ok(p) => p,
                Err(e) => return fail(id, name, e),
            };
            let recursive = match sigma_schedule(&idx, &p) {
                Ok(s) => s.top(),
                Err(e) => return fail(id, name, e),
            };
            let closed = match closed_form_sigma_top(&idx, &p) {
                Ok(c) => c,
                Err(e) => return fail(id, name, e),
            };
            worst_gap = worst_gap.max((recursive - closed).abs() / closed.abs());
            worst_top = worst_top.max(closed);
        }
    }

    let idx1 = IndexSet::defaults(1).expect("1-D defaults exist");
    let idx2 = IndexSet::defaults(2).expect("2-D defaults exist");
    let b0_1 = thresholds(&desk_params(), &idx1, &PropagationConstants::default())
        .map(|t| t.b0);
    let p2 = ModelParams::new(C64::new(-1.0, 0.0), 0.9, 2, 0.0, 1.0)
        .expect("2-D sample parameters are valid");
    let b0_2 = thresholds(&p2, &idx2, &PropagationConstants::default()).map(|t| t.b0);
    let (b0_1, b0_2) = match (b0_1, b0_2) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail(id, name, e),
    };

    CriterionReport {
        id,
        name,
        passed: worst_gap <= 1e-12 && worst_top <= 0.5 + 1e-12 && b0_1 == 65536.0
            && b0_2 == 2048.0,
        detail: format!(
            "closed form vs recursion: worst relative gap {worst_gap:.2e} over 200 \
             sampled alphas (tolerance 1e-12); top exponent max {worst_top:.5} \
             (need <= 1/2); baseline scales {b0_1} (1-D) and {b0_2} (2-D) vs exact \
             65536 / 2048"
        ),
    }
}

/// Criterion 12 — determinism: two runs of the same configuration (seeded
/// perturbed initial data, every artifact exercised) produce byte-identical
/// row files.
pub fn criterion_12_determinism() -> CriterionReport {
    let id = 12;
    let name = "byte-identical reruns";
    let base = std::env::temp_dir().join(format!(
        "dnls-acceptance-determinism-{}",
        std::process::id()
    ));
    std::fs::remove_dir_all(&base).ok();
    let text = format!(
        r#"
        seed = 42
        checks = ["mass_balance"]

        [model]
        lambda_re = -1.0
        alpha = 1.8
        dim = 1
        b = 4.0

        [grid]
        half_width = 20.0
        points = 512

        [plan]
        equation = "rescaled"
        dt = 2.5e-4
        stop_one_minus_bt = 0.5
        snapshot_stride = 5

        [initial]
        family = "perturbed-power-decay"

        [output]
        dir = "{}"
        "#,
        base.display()
    );
    let outcome = (|| -> Result<(bool, usize), String> {
        let cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
        let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
        if let Some(f) = &a.failure {
            return Err(format!("first run aborted: {f}"));
        }
        if let Some(f) = &b.failure {
            return Err(format!("second run aborted: {f}"));
        }
        let rows_a = std::fs::read(&a.rows_path).map_err(|e| e.to_string())?;
        let rows_b = std::fs::read(&b.rows_path).map_err(|e| e.to_string())?;
        Ok((rows_a == rows_b, rows_a.len()))
    })();
    std::fs::remove_dir_all(&base).ok();
    match outcome {
        Ok((identical, bytes)) => CriterionReport {
            id,
            name,
            passed: identical,
            detail: format!(
                "row files of two runs of the same seeded configuration {} \
                 ({bytes} bytes each)",
                if identical { "are byte-identical" } else { "DIFFER" }
            ),
        },
        Err(why) => fail(id, name, why),
    }
}

/// Run the full suite on an already-built context, in criterion order.
pub fn run_all(ctx: &DeskContext) -> Vec<CriterionReport> {
    vec![
        criterion_01_free_propagator(),
        criterion_02_splitting_order(ctx),
        criterion_03_amplitude_flow_lattice(),
        criterion_04_mass_ledger(ctx),
        criterion_05_magnitude_identity(ctx),
        criterion_06_change_of_variables(ctx),
        criterion_07_sup_norm_limit(ctx),
        criterion_08_l2_rate(ctx),
        criterion_09_profile_error_law(ctx),
        criterion_10_profile_algebra(ctx),
        criterion_11_schedule_and_thresholds(),
        criterion_12_determinism(),
    ]
}

/// Build the context at the reference resolution and run everything.
pub fn acceptance_suite(points: usize) -> Vec<CriterionReport> {
    run_all(&DeskContext::build(points))
}
