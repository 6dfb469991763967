//! Late-time structure of the rescaled dissipative flow.
//!
//! As `1 - b t` shrinks, solutions of the rescaled equation organize around a
//! closed-form envelope: with the pointwise amplitude integral
//! `f(t,x) = -alpha |v0(x)|^alpha int_0^t |v|^{-alpha-1} L[v] ds` (where
//! `L[v] = -Im(conj(v) Lap v)/|v|`), the magnitude obeys the exact identity
//!
//! ```text
//! |v(t,x)|^alpha = |v0(x)|^alpha
//!     / (1 + f(t,x) + Cb |v0(x)|^alpha [(1 - b t)^{-nu} - 1]),
//! Cb = 2 alpha |Re lambda| / (b (2 - dim*alpha)),   nu = (2 - dim*alpha)/2,
//! ```
//!
//! and the field itself converges to `omega0 * psi(t) * e^{i theta(t)}` with
//!
//! ```text
//! psi(t,x)   = [ (1 + f0) / (1 + f0 + Cb |v0|^alpha [(1-bt)^{-nu} - 1]) ]^{1/alpha},
//! theta(t,x) = (Im lambda / Re lambda) * log psi(t,x),
//! ```
//!
//! where `f0` is the terminal value of `f` and `omega0` the terminal rescaled
//! profile. This module extracts those objects from a finished `Trajectory`,
//! measures how well the identities and decay laws hold, and rebuilds the
//! physical-space attractor
//!
//! ```text
//! z(t,x) = (1+bt)^{-dim/2} e^{i Theta(t,x)} Psi(t, x/(1+bt)) omega0(x/(1+bt)),
//! Theta  = b|x|^2/(4(1+bt)) - (Im lambda / Re lambda) log Psi,
//! ```
//!
//! with `Psi(t,y)` the same envelope written in the unscaled time variable
//! (bracket `(1+bt)^{nu} - 1`), which coincides with `psi(s, y)` at
//! `s = t/(1+bt)`.
//!
//! Everything here is pure post-processing over immutable trajectories; all
//! pointwise comparisons are restricted to the inner half-domain
//! `|x| <= L/2`, where periodic truncation has not yet contaminated the
//! fields.

use crate::error::{CoreError, Result};
use crate::grid::{C64, Field, Grid};
use crate::integrator::{Equation, MAGNITUDE_FLOOR, Trajectory};
use crate::params::{IndexSet, ModelParams};
use crate::spectral::{laplacian, resample};

/// Minimum number of snapshots a log-log rate fit must see inside its
/// window; asymptotic laws need a real scale-separation range, not a couple
/// of points.
pub const RATE_FIT_MIN_SNAPSHOTS: usize = 20;

/// The pointwise source `L[v] = -Im(conj(v) * Lap v) / |v|` of the amplitude
/// quadrature, evaluated spectrally.
///
/// Rejects fields whose magnitude dips below `MAGNITUDE_FLOOR` anywhere on
/// the grid: the division is meaningless there.
pub fn compute_l(v: &Field) -> Result<Vec<f64>> {
    let min = v
        .values()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if min < MAGNITUDE_FLOOR {
        return Err(CoreError::MagnitudeFloor {
            t: v.time(),
            min,
            floor: MAGNITUDE_FLOOR,
        });
    }
    let lap = laplacian(v);
    Ok(v.values()
        .iter()
        .zip(lap.values())
        .map(|(z, lz)| -(z.conj() * lz).im / z.norm())
        .collect())
}

/// Result of a least-squares power-law fit `value ~ prefactor * s^exponent`
/// on log-log axes.
#[derive(Clone, Copy, Debug)]
pub struct FitResult {
    /// Fitted slope on log-log axes.
    pub exponent: f64,
    /// Fitted multiplicative constant.
    pub prefactor: f64,
    /// Coefficient of determination, clamped into `[0, 1]`.
    pub r2: f64,
    /// `(min, max)` abscissa actually used.
    pub window: (f64, f64),
    /// Number of samples that entered the fit.
    pub points: usize,
}

/// Least-squares fit of `log(value)` against `log(s)` over `(s, value)`
/// samples. Samples with a non-finite or non-positive entry are dropped
/// (they carry no log-log information); at least two samples with distinct
/// abscissas must survive.
pub fn fit_loglog(samples: &[(f64, f64)]) -> Result<FitResult> {
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(s, v) in samples {
        if s > 0.0 && v > 0.0 && s.is_finite() && v.is_finite() {
            xs.push(s.ln());
            ys.push(v.ln());
            s_lo = s_lo.min(s);
            s_hi = s_hi.max(s);
        }
    }
    let n = xs.len();
    if n < 2 {
        return Err(CoreError::Params(format!(
            "log-log fit needs at least two positive finite samples, found {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(CoreError::Params(
            "log-log fit needs at least two distinct abscissas".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        exponent: slope,
        prefactor: intercept.exp(),
        r2,
        window: (s_lo, s_hi),
        points: n,
    })
}

/// The terminal profile data of a rescaled run: the limit amplitude integral
/// `f0`, the limit profile `omega0`, and `|v0|^alpha`, together with the
/// model parameters needed to evaluate the envelope `psi` and phase drift
/// `theta` at any admissible time.
#[derive(Clone, Debug)]
pub struct ProfileSet {
    grid: Grid,
    params: ModelParams,
    f0: Vec<f64>,
    omega0: Vec<C64>,
    v0_mag_alpha: Vec<f64>,
}

/// Evaluate the envelope at a given bracket value
/// `brk = (1 - b t)^{-nu} - 1 >= 0`:
/// `psi_j = ((1 + f0_j) / (1 + f0_j + coef * v0a_j * brk))^{1/alpha}`.
fn eval_psi(f0: &[f64], v0a: &[f64], coef: f64, alpha: f64, brk: f64) -> Vec<f64> {
    let inv_alpha = 1.0 / alpha;
    f0.iter()
        .zip(v0a)
        .map(|(&f, &va)| {
            let top = 1.0 + f;
            (top / (top + coef * va * brk)).powf(inv_alpha)
        })
        .collect()
}

impl ProfileSet {
    /// Assemble a profile set from raw parts, validating the structural
    /// requirements: a dissipative rescaled model (`b > 0`, `Re lambda < 0`,
    /// `alpha < 2/dim`), matching field lengths, finite entries,
    /// `1 + f0 > 0`, and `|v0|^alpha >= 0`.
    pub fn from_parts(
        grid: Grid,
        params: ModelParams,
        f0: Vec<f64>,
        omega0: Vec<C64>,
        v0_mag_alpha: Vec<f64>,
    ) -> Result<Self> {
        params.validate(false)?;
        if params.b <= 0.0 || params.lambda.re >= 0.0 {
            return Err(CoreError::Params(
                "profile extraction requires b > 0 and Re lambda < 0".into(),
            ));
        }
        if params.nu() <= 0.0 {
            return Err(CoreError::Params(
                "profile extraction requires alpha strictly below 2/dim".into(),
            ));
        }
        let n = grid.len();
        if f0.len() != n || omega0.len() != n || v0_mag_alpha.len() != n {
            return Err(CoreError::Params(format!(
                "profile fields must match the grid: {} nodes vs {}/{}/{}",
                n,
                f0.len(),
                omega0.len(),
                v0_mag_alpha.len()
            )));
        }
        if f0.iter().any(|f| !f.is_finite())
            || v0_mag_alpha.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || omega0.iter().any(|w| !w.re.is_finite() || !w.im.is_finite())
        {
            return Err(CoreError::Params("profile fields must be finite".into()));
        }
        if f0.iter().any(|&f| 1.0 + f <= 0.0) {
            return Err(CoreError::Params(
                "1 + f0 vanishes or turns negative somewhere; the envelope is undefined there"
                    .into(),
            ));
        }
        Ok(ProfileSet {
            grid,
            params,
            f0,
            omega0,
            v0_mag_alpha,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Terminal amplitude integral `f0`.
    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    /// Terminal rescaled profile `omega0`.
    pub fn omega0(&self) -> &[C64] {
        &self.omega0
    }

    /// `|v0|^alpha` on the grid.
    pub fn v0_mag_alpha(&self) -> &[f64] {
        &self.v0_mag_alpha
    }

    /// Coupling constant `Cb = 2 alpha |Re lambda| / (b (2 - dim*alpha))` in
    /// front of the envelope bracket.
    pub fn bracket_coef(&self) -> f64 {
        let p = &self.params;
        2.0 * p.alpha * p.lambda.re.abs() / (p.b * (2.0 - p.dim as f64 * p.alpha))
    }

    /// Rescaled-time bracket `(1 - b t)^{-nu} - 1`, in a form that stays
    /// accurate near `t = 0`.
    fn bracket(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(CoreError::Params(format!(
                "envelope time must be >= 0 (got {t})"
            )));
        }
        let s = 1.0 - self.params.b * t;
        if s <= 0.0 {
            return Err(CoreError::TimePastSingularity { t, b: self.params.b });
        }
        Ok((-self.params.nu() * s.ln()).exp_m1())
    }

    /// Envelope `psi(t, .)` on the grid; always lies in `(0, 1]` for
    /// `t in [0, 1/b)`, equals 1 identically at `t = 0`, and is pointwise
    /// nonincreasing in `t`.
    pub fn psi(&self, t: f64) -> Result<Vec<f64>> {
        let brk = self.bracket(t)?;
        Ok(eval_psi(
            &self.f0,
            &self.v0_mag_alpha,
            self.bracket_coef(),
            self.params.alpha,
            brk,
        ))
    }

    /// Phase drift `theta(t, .) = (Im lambda / Re lambda) log psi(t, .)`.
    pub fn theta(&self, t: f64) -> Result<Vec<f64>> {
        let ratio = self.params.lambda.im / self.params.lambda.re;
        Ok(self.psi(t)?.iter().map(|&ps| ratio * ps.ln()).collect())
    }

    /// The predicted field `omega0 * psi(t) * e^{i theta(t)}`.
    pub fn predicted(&self, t: f64) -> Result<Vec<C64>> {
        let ratio = self.params.lambda.im / self.params.lambda.re;
        let psi = self.psi(t)?;
        Ok(self
            .omega0
            .iter()
            .zip(&psi)
            .map(|(&w, &ps)| w * C64::from_polar(ps, ratio * ps.ln()))
            .collect())
    }

    /// `L^2` norm of the predicted field at time `t`; since the phase drift
    /// is unimodular this is the norm of `omega0 * psi(t)`.
    pub fn predicted_l2(&self, t: f64) -> Result<f64> {
        let psi = self.psi(t)?;
        let sq: f64 = self
            .omega0
            .iter()
            .zip(&psi)
            .map(|(w, &ps)| {
                let r = w.norm() * ps;
                r * r
            })
            .sum();
        Ok((sq * self.grid.cell_measure()).sqrt())
    }
}

/// Shared guard: the trajectory must come from the rescaled dissipative
/// equation with `b > 0`, `Re lambda < 0`, and at least one snapshot.
fn require_rescaled_dissipative(traj: &Trajectory) -> Result<&ModelParams> {
    let p = &traj.params;
    if traj.plan.equation != Equation::Rescaled || p.b <= 0.0 {
        return Err(CoreError::Params(
            "profile analysis requires a rescaled run with b > 0".into(),
        ));
    }
    if p.lambda.re >= 0.0 {
        return Err(CoreError::Params(
            "profile analysis requires Re lambda < 0".into(),
        ));
    }
    if traj.snapshots.is_empty() {
        return Err(CoreError::Params("trajectory has no snapshots".into()));
    }
    Ok(p)
}

/// As `require_rescaled_dissipative`, additionally demanding the pointwise
/// amplitude quadrature.
fn require_tracked(traj: &Trajectory) -> Result<&ModelParams> {
    let p = require_rescaled_dissipative(traj)?;
    if !traj.tracked_f {
        return Err(CoreError::Params(
            "trajectory was integrated without the pointwise amplitude quadrature".into(),
        ));
    }
    Ok(p)
}

/// `|v0|^alpha` from the initial snapshot.
fn initial_mag_alpha(traj: &Trajectory, alpha: f64) -> Vec<f64> {
    traj.initial()
        .field
        .values()
        .iter()
        .map(|z| z.norm().powf(alpha))
        .collect()
}

/// Amplitude integral `f = -alpha |v0|^alpha q` from a stored raw quadrature
/// `q`.
fn f_from_quadrature(v0a: &[f64], q: &[f64], alpha: f64) -> Vec<f64> {
    v0a.iter().zip(q).map(|(&va, &qj)| -alpha * va * qj).collect()
}

/// Per-snapshot worst-case relative error of the exact magnitude identity on
/// the inner half-domain:
///
/// ```text
/// residual(t) = max_j | |v(t,x_j)|^alpha
///     - |v0|^alpha / (1 + f + Cb |v0|^alpha [(1-bt)^{-nu} - 1]) | / |v0|^alpha.
/// ```
///
/// Exactly zero at `t = 0`. Requires a rescaled dissipative run with the
/// quadrature tracked; the identity as written has no `b = 0` analogue here.
pub fn magnitude_identity_residual(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let p = require_tracked(traj)?;
    let grid = traj.initial().field.grid().clone();
    let v0a = initial_mag_alpha(traj, p.alpha);
    let coef = 2.0 * p.alpha * p.lambda.re.abs() / (p.b * (2.0 - p.dim as f64 * p.alpha));
    let nu = p.nu();
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let t = snap.time();
        let s = 1.0 - p.b * t;
        let brk = (-nu * s.ln()).exp_m1();
        let mut worst = 0.0f64;
        for (j, z) in snap.field.values().iter().enumerate() {
            if !grid.is_inner(j) {
                continue;
            }
            let va = v0a[j];
            let den = 1.0 - p.alpha * va * snap.f_quadrature[j] + coef * va * brk;
            let rel = ((z.norm().powf(p.alpha) - va / den) / va).abs();
            worst = worst.max(rel);
        }
        if !worst.is_finite() {
            return Err(CoreError::NonFinite { t });
        }
        out.push((t, worst));
    }
    Ok(out)
}

/// Extract the terminal profile data from a finished run.
///
/// The run must have progressed to `1 - b t <= 1e-2`: the terminal values of
/// `f` and of the rescaled field stand in for their limits, and the residual
/// drift of `f` past that point is below the tolerances this data feeds.
/// Rejects trajectories where `1 + f0 <= 0` anywhere (the envelope would be
/// undefined).
pub fn build_profiles(traj: &Trajectory, p: &ModelParams) -> Result<ProfileSet> {
    let tp = require_tracked(traj)?;
    if tp != p {
        return Err(CoreError::Params(
            "model parameters disagree with the trajectory's".into(),
        ));
    }
    let last = traj.last();
    let t_f = last.time();
    let s_f = 1.0 - p.b * t_f;
    if s_f > 1e-2 * (1.0 + 1e-9) {
        return Err(CoreError::Params(format!(
            "profile extraction needs the run to reach 1 - b t <= 1e-2 (final value {s_f:.3e})"
        )));
    }
    let grid = traj.initial().field.grid().clone();
    let v0a = initial_mag_alpha(traj, p.alpha);
    let f0 = f_from_quadrature(&v0a, &last.f_quadrature, p.alpha);
    if f0.iter().any(|&f| !(1.0 + f > 0.0)) {
        return Err(CoreError::Params(
            "1 + f0 vanishes or turns negative somewhere; the envelope is undefined there".into(),
        ));
    }
    let coef = 2.0 * p.alpha * p.lambda.re.abs() / (p.b * (2.0 - p.dim as f64 * p.alpha));
    let brk_f = (-p.nu() * s_f.ln()).exp_m1();
    let psi_f = eval_psi(&f0, &v0a, coef, p.alpha, brk_f);
    let ratio = p.lambda.im / p.lambda.re;
    let omega0: Vec<C64> = last
        .field
        .values()
        .iter()
        .zip(&psi_f)
        .map(|(&v, &ps)| v * C64::from_polar(1.0 / ps, -ratio * ps.ln()))
        .collect();
    ProfileSet::from_parts(grid, *p, f0, omega0, v0a)
}

/// Weighted deviation `max_inner <x>^n |omega(t) - omega0|` of the recovered
/// profile `omega(t) = v e^{-i theta}/psi` from its terminal value, per
/// snapshot. Converges to zero at the final snapshot by construction.
pub fn omega_deviation_series(
    traj: &Trajectory,
    prof: &ProfileSet,
    idx: &IndexSet,
) -> Result<Vec<(f64, f64)>> {
    require_rescaled_dissipative(traj)?;
    let grid = prof.grid();
    if traj.initial().field.grid() != grid {
        return Err(CoreError::Params(
            "trajectory and profile live on different grids".into(),
        ));
    }
    let weight = grid.weight_vector(idx.n as f64);
    let ratio = prof.params.lambda.im / prof.params.lambda.re;
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let t = snap.time();
        let psi = prof.psi(t)?;
        let mut worst = 0.0f64;
        for (j, z) in snap.field.values().iter().enumerate() {
            if !grid.is_inner(j) {
                continue;
            }
            let omega = z * C64::from_polar(1.0 / psi[j], -ratio * psi[j].ln());
            worst = worst.max(weight[j] * (omega - prof.omega0[j]).norm());
        }
        if !worst.is_finite() {
            return Err(CoreError::NonFinite { t });
        }
        out.push((t, worst));
    }
    Ok(out)
}

/// Per-snapshot profile error and its power-law fit.
#[derive(Clone, Debug)]
pub struct ProfileErrorReport {
    /// `(t, max_inner <x>^n |v - omega0 psi e^{i theta}|)` for every
    /// snapshot.
    pub series: Vec<(f64, f64)>,
    /// Fit of the error against `1 - b t` over the requested window,
    /// excluding the final snapshot (whose error vanishes by construction).
    /// `None` when the in-window errors are too degenerate to fit (e.g.
    /// identically zero).
    pub fit: Option<FitResult>,
}

/// Measure `e(t) = max_inner <x>^n |v(t) - omega0 psi(t) e^{i theta(t)}|`
/// for every snapshot and fit `e ~ C (1-bt)^p` over the snapshots whose
/// `1 - b t` lies in `window = (lo, hi)`. The final snapshot is excluded
/// from the fit; the window must still contain at least
/// `RATE_FIT_MIN_SNAPSHOTS` snapshots.
pub fn profile_error(
    traj: &Trajectory,
    prof: &ProfileSet,
    idx: &IndexSet,
    window: (f64, f64),
) -> Result<ProfileErrorReport> {
    require_rescaled_dissipative(traj)?;
    let grid = prof.grid();
    if traj.initial().field.grid() != grid {
        return Err(CoreError::Params(
            "trajectory and profile live on different grids".into(),
        ));
    }
    if !(window.0 > 0.0 && window.0 < window.1) {
        return Err(CoreError::Params(format!(
            "fit window must satisfy 0 < lo < hi (got {:?})",
            window
        )));
    }
    let b = prof.params.b;
    let weight = grid.weight_vector(idx.n as f64);
    let t_last = traj.last().time();
    let mut series = Vec::with_capacity(traj.snapshots.len());
    let mut in_window = Vec::new();
    for snap in &traj.snapshots {
        let t = snap.time();
        let pred = prof.predicted(t)?;
        let mut worst = 0.0f64;
        for (j, z) in snap.field.values().iter().enumerate() {
            if !grid.is_inner(j) {
                continue;
            }
            worst = worst.max(weight[j] * (z - pred[j]).norm());
        }
        if !worst.is_finite() {
            return Err(CoreError::NonFinite { t });
        }
        series.push((t, worst));
        let s = 1.0 - b * t;
        if t < t_last && s >= window.0 && s <= window.1 {
            in_window.push((s, worst));
        }
    }
    if in_window.len() < RATE_FIT_MIN_SNAPSHOTS {
        return Err(CoreError::Params(format!(
            "rate fit needs at least {RATE_FIT_MIN_SNAPSHOTS} snapshots with 1 - b t in \
             [{:.3e}, {:.3e}], found {}",
            window.0,
            window.1,
            in_window.len()
        )));
    }
    let fit = fit_loglog(&in_window).ok();
    Ok(ProfileErrorReport { series, fit })
}

/// The limiting constant of the sup-norm decay law,
/// `b (2 - dim*alpha) / (2 alpha |Re lambda|)`. Undefined (rejected) at the
/// critical exponent `alpha = 2/dim` and for non-dissipative parameters.
pub fn sup_target(p: &ModelParams) -> Result<f64> {
    if p.b <= 0.0 || p.lambda.re >= 0.0 {
        return Err(CoreError::Params(
            "sup-norm limit requires b > 0 and Re lambda < 0".into(),
        ));
    }
    let two_nu = 2.0 - p.dim as f64 * p.alpha;
    if two_nu <= 0.0 {
        return Err(CoreError::Params(
            "sup-norm limit degenerates at alpha = 2/dim; the law holds only below it".into(),
        ));
    }
    Ok(p.b * two_nu / (2.0 * p.alpha * p.lambda.re.abs()))
}

/// How closely `(1-bt)^{-nu} ||v||_inf^alpha` approaches its limit.
#[derive(Clone, Debug)]
pub struct SupLimitReport {
    /// The limiting constant `b (2 - dim*alpha)/(2 alpha |Re lambda|)`.
    pub target: f64,
    /// Relative deviation at the final snapshot.
    pub final_deviation: f64,
    /// `(t, relative deviation)` for every snapshot.
    pub series: Vec<(f64, f64)>,
    /// Power-law fit of the deviation against `1 - b t` over the last decade
    /// (positive exponent = deviation still shrinking at the end).
    pub fit: Option<FitResult>,
}

/// Evaluate the sup-norm decay law on a finished rescaled run: the relative
/// deviation of `(1-bt)^{-nu} ||v(t)||_inf^alpha` from `sup_target` per
/// snapshot, its final value, and its trend over the last decade of
/// `1 - b t` (which must contain at least `RATE_FIT_MIN_SNAPSHOTS`
/// snapshots).
pub fn sup_limit_check(traj: &Trajectory, p: &ModelParams) -> Result<SupLimitReport> {
    let tp = require_rescaled_dissipative(traj)?;
    if tp != p {
        return Err(CoreError::Params(
            "model parameters disagree with the trajectory's".into(),
        ));
    }
    let target = sup_target(p)?;
    let nu = p.nu();
    let mut series = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let t = snap.time();
        let s = 1.0 - p.b * t;
        let q = s.powf(-nu) * snap.field.sup_norm().powf(p.alpha);
        let dev = ((q - target) / target).abs();
        if !dev.is_finite() {
            return Err(CoreError::NonFinite { t });
        }
        series.push((t, dev));
    }
    let final_deviation = series.last().unwrap().1;
    let s_min = 1.0 - p.b * traj.last().time();
    let in_decade: Vec<(f64, f64)> = series
        .iter()
        .map(|&(t, d)| (1.0 - p.b * t, d))
        .filter(|&(s, _)| s <= 10.0 * s_min && s >= s_min * (1.0 - 1e-12))
        .collect();
    if in_decade.len() < RATE_FIT_MIN_SNAPSHOTS {
        return Err(CoreError::Params(format!(
            "rate fit needs at least {RATE_FIT_MIN_SNAPSHOTS} snapshots in the last decade of \
             1 - b t, found {}",
            in_decade.len()
        )));
    }
    let fit = fit_loglog(&in_decade).ok();
    Ok(SupLimitReport {
        target,
        final_deviation,
        series,
        fit,
    })
}

/// Closed-form relative deviation of the spatially constant analogue: for
/// initial amplitude `r0`, the ordinary flow gives
/// `r(t)^{-alpha} = r0^{-alpha} + (alpha |Re lambda|/(b nu)) [(1-bt)^{-nu} - 1]`,
/// so
///
/// ```text
/// deviation(s) = |c - r0^{-alpha}| / (r0^{-alpha} + c (s^{-nu} - 1)),
/// c = 1 / sup_target,   s = 1 - b t,
/// ```
///
/// which decreases to zero as `s -> 0`.
pub fn ode_sup_deviation(r0: f64, p: &ModelParams, one_minus_bt: f64) -> Result<f64> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(CoreError::Params(format!(
            "initial amplitude must be positive (got {r0})"
        )));
    }
    if !(one_minus_bt > 0.0 && one_minus_bt <= 1.0) {
        return Err(CoreError::Params(format!(
            "1 - b t must lie in (0, 1] (got {one_minus_bt})"
        )));
    }
    let target = sup_target(p)?;
    let c = 1.0 / target;
    let x = one_minus_bt.powf(-p.nu());
    let r0ai = r0.powf(-p.alpha);
    Ok((c - r0ai).abs() / (r0ai + c * (x - 1.0)))
}

/// The predicted `L^2` decay exponent `(1/alpha - dim/2)(1 - dim/(2n))` of
/// the rescaled field.
pub fn l2_rate_target(p: &ModelParams, idx: &IndexSet) -> Result<f64> {
    if idx.n == 0 {
        return Err(CoreError::Params("weight index n must be positive".into()));
    }
    Ok((1.0 / p.alpha - p.dim as f64 / 2.0) * (1.0 - p.dim as f64 / (2.0 * idx.n as f64)))
}

/// `L^2` decay-law measurement.
#[derive(Clone, Debug)]
pub struct L2RateReport {
    /// Predicted exponent `(1/alpha - dim/2)(1 - dim/(2n))`.
    pub target: f64,
    /// `(t, ||v(t)||_2)` for every snapshot.
    pub series: Vec<(f64, f64)>,
    /// Fit of `||v||_2 ~ C (1-bt)^p` over the last decade of `1 - b t`.
    pub fit: Option<FitResult>,
}

/// Fit the `L^2` decay law over the last decade of `1 - b t` (which must
/// contain at least `RATE_FIT_MIN_SNAPSHOTS` snapshots) and report it next
/// to the predicted exponent.
pub fn l2_rate_check(traj: &Trajectory, p: &ModelParams, idx: &IndexSet) -> Result<L2RateReport> {
    let tp = require_rescaled_dissipative(traj)?;
    if tp != p {
        return Err(CoreError::Params(
            "model parameters disagree with the trajectory's".into(),
        ));
    }
    let target = l2_rate_target(p, idx)?;
    let series: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .map(|snap| (snap.time(), snap.field.l2_norm()))
        .collect();
    let s_min = 1.0 - p.b * traj.last().time();
    let in_decade: Vec<(f64, f64)> = series
        .iter()
        .map(|&(t, v)| (1.0 - p.b * t, v))
        .filter(|&(s, _)| s <= 10.0 * s_min && s >= s_min * (1.0 - 1e-12))
        .collect();
    if in_decade.len() < RATE_FIT_MIN_SNAPSHOTS {
        return Err(CoreError::Params(format!(
            "rate fit needs at least {RATE_FIT_MIN_SNAPSHOTS} snapshots in the last decade of \
             1 - b t, found {}",
            in_decade.len()
        )));
    }
    let fit = fit_loglog(&in_decade).ok();
    Ok(L2RateReport {
        target,
        series,
        fit,
    })
}

/// `(t, ||omega0 psi(t)||_2)` for a ladder of times: the closed-form route
/// to the `L^2` decay law, used to separate fit-window error from solver
/// error.
pub fn profile_l2_series(prof: &ProfileSet, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| Ok((t, prof.predicted_l2(t)?)))
        .collect()
}

/// Rebuild the physical-space attractor
/// `z(t,x) = (1+bt)^{-dim/2} e^{i Theta} Psi(t, x/(1+bt)) omega0(x/(1+bt))`
/// on `target`, where `Psi` is the envelope with bracket `(1+bt)^{nu} - 1`
/// and `Theta = b|x|^2/(4(1+bt)) - (Im lambda/Re lambda) log Psi`.
///
/// `omega0`, `f0`, and `|v0|^alpha` are carried to the dilated nodes
/// spectrally (identically when `t = 0` on the same grid); the quadratic
/// phase is applied pointwise afterwards and must be resolved by the target
/// grid (`b L h / (2(1+bt)) <= pi/4`). The identity `Psi(t, y) = psi(s, y)`
/// at `s = t/(1+bt)` is asserted to 1e-10 on every call.
pub fn physical_profile_z(
    prof: &ProfileSet,
    p: &ModelParams,
    t: f64,
    target: &Grid,
) -> Result<Field> {
    if *p != prof.params {
        return Err(CoreError::Params(
            "model parameters disagree with the profile's".into(),
        ));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CoreError::Params(format!(
            "physical reconstruction needs a finite t >= 0 (got {t})"
        )));
    }
    let b = p.b;
    let growth = 1.0 + b * t;
    let dil = 1.0 / growth;
    let nu = p.nu();
    let phase_step = b * target.half_width() * target.spacing() / (2.0 * growth);
    if phase_step > std::f64::consts::FRAC_PI_4 * (1.0 + 1e-12) {
        return Err(CoreError::PhaseResolution { value: phase_step });
    }
    let coef = prof.bracket_coef();
    // The envelope in unscaled time, bracket (1+bt)^nu - 1, must agree with
    // the rescaled-time envelope at s = t/(1+bt), whose 1 - b*s equals
    // 1/(1+bt) exactly; use that form rather than re-subtracting, which
    // would shed digits for large b*t.
    let brk = (nu * growth.ln()).exp_m1();
    let psi_unscaled = eval_psi(&prof.f0, &prof.v0_mag_alpha, coef, p.alpha, brk);
    let brk_rescaled = (-nu * dil.ln()).exp_m1();
    let psi_rescaled = eval_psi(&prof.f0, &prof.v0_mag_alpha, coef, p.alpha, brk_rescaled);
    let max_gap = psi_unscaled
        .iter()
        .zip(&psi_rescaled)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0f64, f64::max);
    if max_gap > 1e-10 {
        return Err(CoreError::Params(format!(
            "envelope forms disagree by {max_gap:.3e} between time variables; \
             inconsistent profile data"
        )));
    }
    // Profile data at the dilated nodes y = x/(1+bt).
    let same_grid = (dil - 1.0).abs() < 1e-14 && *target == *prof.grid();
    let (w_y, f0_y, va_y): (Vec<C64>, Vec<f64>, Vec<f64>) = if same_grid {
        (
            prof.omega0.clone(),
            prof.f0.clone(),
            prof.v0_mag_alpha.clone(),
        )
    } else {
        let grid = prof.grid().clone();
        let wf = Field::new(grid.clone(), prof.omega0.clone(), 0.0)?;
        let f0f = Field::new(
            grid.clone(),
            prof.f0.iter().map(|&r| C64::new(r, 0.0)).collect(),
            0.0,
        )?;
        let vaf = Field::new(
            grid,
            prof.v0_mag_alpha.iter().map(|&r| C64::new(r, 0.0)).collect(),
            0.0,
        )?;
        (
            resample(&wf, dil, target)?.into_values(),
            resample(&f0f, dil, target)?.values().iter().map(|z| z.re).collect(),
            resample(&vaf, dil, target)?.values().iter().map(|z| z.re).collect(),
        )
    };
    let ratio = p.lambda.im / p.lambda.re;
    let amp = growth.powf(-(p.dim as f64) / 2.0);
    let inv_alpha = 1.0 / p.alpha;
    let mut vals = Vec::with_capacity(target.len());
    for j in 0..target.len() {
        let top = 1.0 + f0_y[j];
        let den = top + coef * va_y[j] * brk;
        if !(top > 0.0 && den > 0.0) {
            return Err(CoreError::NonFinite { t });
        }
        let psi = (top / den).powf(inv_alpha);
        let theta_big = b * target.node_radius2(j) / (4.0 * growth) - ratio * psi.ln();
        vals.push(w_y[j] * C64::from_polar(amp * psi, theta_big));
    }
    let out = Field::new(target.clone(), vals, t)?;
    if !out.is_finite() {
        return Err(CoreError::NonFinite { t });
    }
    Ok(out)
}
