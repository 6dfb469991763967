//! Strang-split time stepping for the autonomous equation
//! `d_t v = i Lap v + lambda |v|^alpha v` and for its rescaled companion
//! `d_t v = i Lap v + lambda (1 - b t)^{-(4 - dim*alpha)/2} |v|^alpha v`
//! on `t in [0, 1/b)`.
//!
//! Each step composes a half free flow, the exact nonlinear flow over the
//! effective nonlinear time, and another half free flow; both substeps are
//! solved in closed form, so the only error is the splitting commutator and
//! the scheme is second order in `dt`.
//!
//! Alongside the state, the stepper accumulates two trapezoid quadratures:
//! the dissipation integral entering the mass ledger, and the pointwise
//! quadrature `q(t,x) = int_0^t |v|^{-alpha-1} L[v] ds` (with
//! `L[v] = -Im(conj(v) Lap v)/|v|`) that drives the closed-form amplitude
//! reconstruction; the profile layer turns it into the amplitude integral
//! `f(t,x) = -alpha |v0(x)|^alpha q(t,x)`.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::grid::{C64, Field};
use crate::params::ModelParams;
use crate::spectral::{free_propagate, laplacian};

/// Pointwise floor on `|v|` below which the `|v|^{-alpha-1}` quadrature is
/// numerically meaningless; runs tracking it abort if the inner half-domain
/// dips under this value.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

/// Which right-hand side the stepper integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equation {
    /// Constant coupling `lambda`.
    Autonomous,
    /// Time-dependent coupling `lambda (1 - b t)^{-(4 - dim*alpha)/2}`.
    Rescaled,
}

/// Time-stepping plan: base step, horizon, snapshot cadence, and the
/// near-singularity step control.
#[derive(Clone, Debug)]
pub struct StepPlan {
    pub equation: Equation,
    /// Base time step.
    pub dt: f64,
    /// Final time (for the rescaled equation, strictly below `1/b`).
    pub t_end: f64,
    /// Keep every `snapshot_stride`-th step (plus mandatory and final times).
    pub snapshot_stride: usize,
    /// Shrink steps to `adapt_c * (1 - b t)` near the singularity.
    pub adapt: bool,
    /// Safety constant of the adaptive rule, in `(0, 0.1]`.
    pub adapt_c: f64,
    /// Times the stepper must land on exactly (each snapshotted).
    pub mandatory_times: Vec<f64>,
    /// Force the pointwise quadrature on/off; `None` tracks it exactly when
    /// the run is rescaled with `b > 0` and `Re lambda < 0`.
    pub track_f: Option<bool>,
}

impl StepPlan {
    pub fn new(equation: Equation, dt: f64, t_end: f64) -> Self {
        StepPlan {
            equation,
            dt,
            t_end,
            snapshot_stride: 1,
            adapt: true,
            adapt_c: 0.05,
            mandatory_times: Vec::new(),
            track_f: None,
        }
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CoreError::Plan(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(CoreError::Plan(format!("t_end must be positive (got {})", self.t_end)));
        }
        if self.equation == Equation::Rescaled && p.b > 0.0 && self.t_end >= 1.0 / p.b {
            return Err(CoreError::TimePastSingularity { t: self.t_end, b: p.b });
        }
        if !(self.adapt_c > 0.0 && self.adapt_c <= 0.1) {
            return Err(CoreError::Plan(format!(
                "adapt_c must lie in (0, 0.1] (got {})",
                self.adapt_c
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(CoreError::Plan("snapshot_stride must be >= 1".into()));
        }
        for &mt in &self.mandatory_times {
            if !(mt > 0.0 && mt <= self.t_end * (1.0 + 1e-12)) {
                return Err(CoreError::Plan(format!(
                    "mandatory time {mt} outside (0, t_end = {}]",
                    self.t_end
                )));
            }
        }
        Ok(())
    }

    fn resolved_track_f(&self, p: &ModelParams) -> bool {
        self.track_f.unwrap_or(
            self.equation == Equation::Rescaled && p.b > 0.0 && p.lambda.re < 0.0,
        )
    }
}

/// One stored state: the field plus the two running quadratures at its time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub field: Field,
    /// Accumulated `int_0^t |v|^{-alpha-1} L[v] ds` per node (zeros when the
    /// quadrature is off).
    pub f_quadrature: Vec<f64>,
    /// Accumulated `int_0^t w(s) ||v||_{alpha+2}^{alpha+2} ds`, with the
    /// weight `w = (1 - b s)^{-(4 - dim*alpha)/2}` on rescaled runs and 1
    /// otherwise.
    pub dissipation: f64,
    /// Steps completed when this snapshot was taken.
    pub step: usize,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.field.time()
    }
}

/// Everything a finished run hands to the analysis routines.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: ModelParams,
    pub plan: StepPlan,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// Whether the pointwise quadrature was actually accumulated.
    pub tracked_f: bool,
}

impl Trajectory {
    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory holds at least its initial snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    /// Snapshot at the given time, if one was stored within tolerance.
    pub fn snapshot_at(&self, t: f64, tol: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| {
                (a.time() - t).abs().partial_cmp(&(b.time() - t).abs()).unwrap()
            })
            .filter(|s| (s.time() - t).abs() <= tol)
    }
}

/// State carried across a checkpoint boundary so a resumed run reproduces an
/// uninterrupted one.
#[derive(Clone, Debug)]
pub struct Carry {
    pub f_quadrature: Vec<f64>,
    pub dissipation: f64,
    pub steps_done: usize,
}

/// Closed-form flow of `dz/dtau = lambda |z|^alpha z` through time `tau`.
///
/// Writing `z = r e^{i phi}`: `r(tau) = r_0 (1 - alpha Re(lambda) r_0^alpha
/// tau)^{-1/alpha}` and the phase advances by `-(Im lambda / (alpha Re
/// lambda)) log(...)`, degenerating to `phi_0 + Im(lambda) r_0^alpha tau`
/// when `Re lambda = 0`. The origin is a fixed point.
pub fn nonlinear_flow_scalar(z0: C64, tau: f64, lambda: Complex64, alpha: f64) -> C64 {
    let r0 = z0.norm();
    if r0 == 0.0 {
        return z0;
    }
    let ra = r0.powf(alpha);
    if lambda.re == 0.0 {
        return z0 * C64::from_polar(1.0, lambda.im * ra * tau);
    }
    let g = 1.0 - alpha * lambda.re * ra * tau;
    let r = r0 * g.powf(-1.0 / alpha);
    let phase = -(lambda.im / (alpha * lambda.re)) * g.ln();
    C64::from_polar(r, z0.arg() + phase)
}

/// Apply the exact nonlinear flow pointwise over effective time `tau >= 0`.
pub fn nonlinear_substep(f: &Field, tau: f64, p: &ModelParams) -> Result<Field> {
    p.validate(false)?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(CoreError::Plan(format!("nonlinear substep needs tau >= 0 (got {tau})")));
    }
    let values = f
        .values()
        .iter()
        .map(|&z| nonlinear_flow_scalar(z, tau, p.lambda, p.alpha))
        .collect();
    Field::new(f.grid().clone(), values, f.time())
}

/// Exact integral of the rescaled coupling weight over one step,
/// `int_t^{t+dt} (1 - b s)^{-(4 - dim*alpha)/2} ds`.
///
/// Equals `dt` when `b = 0`; at the critical power `dim*alpha = 2` it takes
/// the logarithmic form `(1/b) log((1 - b t)/(1 - b(t + dt)))`. The general
/// case is evaluated through `expm1`, which passes continuously through the
/// critical power.
pub fn effective_tau(t: f64, dt: f64, p: &ModelParams) -> Result<f64> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(CoreError::Plan(format!("dt must be >= 0 (got {dt})")));
    }
    if p.b == 0.0 {
        return Ok(dt);
    }
    if !(t >= 0.0) || 1.0 - p.b * (t + dt) <= 0.0 {
        return Err(CoreError::TimePastSingularity { t: t + dt, b: p.b });
    }
    let e = p.nu(); // (2 - dim*alpha)/2
    let y = 1.0 - p.b * t;
    let x = 1.0 - p.b * (t + dt);
    if e == 0.0 {
        Ok((y / x).ln() / p.b)
    } else {
        // (x^{-e} - y^{-e}) / (b e) = y^{-e} expm1(e log(y/x)) / (b e)
        Ok(y.powf(-e) * (e * (y / x).ln()).exp_m1() / (p.b * e))
    }
}

/// One second-order step: half free flow, exact nonlinear flow over the
/// effective time, half free flow.
pub fn strang_step(f: &Field, dt: f64, p: &ModelParams, equation: Equation) -> Result<Field> {
    let t = f.time();
    let tau = match equation {
        Equation::Autonomous => dt,
        Equation::Rescaled => effective_tau(t, dt, p)?,
    };
    let half = free_propagate(f, dt / 2.0);
    let mid = nonlinear_substep(&half, tau, p)?;
    Ok(free_propagate(&mid, dt / 2.0).with_time(t + dt))
}

/// The integrand of the pointwise amplitude quadrature,
/// `|v|^{-alpha-1} L[v] = -Im(conj(v) Lap v) / |v|^{alpha+2}`,
/// floored to zero wherever `|v| < MAGNITUDE_FLOOR`.
fn f_integrand(f: &Field, alpha: f64) -> Vec<f64> {
    let lap = laplacian(f);
    f.values()
        .iter()
        .zip(lap.values())
        .map(|(v, lv)| {
            let r = v.norm();
            if r < MAGNITUDE_FLOOR {
                0.0
            } else {
                -(v.conj() * lv).im / r.powf(alpha + 2.0)
            }
        })
        .collect()
}

fn dissipation_integrand(f: &Field, p: &ModelParams, equation: Equation) -> f64 {
    let w = match equation {
        Equation::Autonomous => 1.0,
        Equation::Rescaled => p.rescaled_weight(f.time()),
    };
    w * f.lp_pow(p.alpha + 2.0)
}

/// Integrate from `v0.time()` to `plan.t_end` with zeroed quadratures.
pub fn run(v0: &Field, plan: &StepPlan, p: &ModelParams) -> Result<Trajectory> {
    let carry = Carry {
        f_quadrature: vec![0.0; v0.grid().len()],
        dissipation: 0.0,
        steps_done: 0,
    };
    run_with_carry(v0, plan, p, carry)
}

/// Integrate from `v0.time()` to `plan.t_end`, continuing previously
/// accumulated quadratures (checkpoint resume). The step/snapshot sequence
/// from `v0.time()` onward is identical to an uninterrupted run's, so the
/// final state agrees bit for bit.
pub fn run_with_carry(
    v0: &Field,
    plan: &StepPlan,
    p: &ModelParams,
    carry: Carry,
) -> Result<Trajectory> {
    p.validate(false)?;
    plan.validate(p)?;
    if !v0.is_finite() {
        return Err(CoreError::NonFinite { t: v0.time() });
    }
    if carry.f_quadrature.len() != v0.grid().len() {
        return Err(CoreError::Plan(format!(
            "carried quadrature has {} nodes, grid has {}",
            carry.f_quadrature.len(),
            v0.grid().len()
        )));
    }
    let t0 = v0.time();
    if !(t0 >= 0.0) || t0 >= plan.t_end {
        return Err(CoreError::Plan(format!(
            "start time {t0} must lie in [0, t_end = {})",
            plan.t_end
        )));
    }

    let track_f = plan.resolved_track_f(p);
    if track_f {
        let min_inner = v0.min_abs_inner();
        if min_inner < MAGNITUDE_FLOOR {
            return Err(CoreError::MagnitudeFloor {
                t: v0.time(),
                min: min_inner,
                floor: MAGNITUDE_FLOOR,
            });
        }
    }
    let mut mandatory: Vec<f64> = plan
        .mandatory_times
        .iter()
        .copied()
        .filter(|&mt| mt > t0 * (1.0 + 1e-12))
        .collect();
    mandatory.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mandatory.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut cur = v0.clone();
    let mut f_quadrature = carry.f_quadrature;
    let mut dissipation = carry.dissipation;
    let mut steps = carry.steps_done;

    let mut g_prev = dissipation_integrand(&cur, p, plan.equation);
    let mut fi_prev = if track_f { f_integrand(&cur, p.alpha) } else { Vec::new() };

    let mut snapshots = vec![Snapshot {
        field: cur.clone(),
        f_quadrature: f_quadrature.clone(),
        dissipation,
        step: steps,
    }];
    let mut next_mandatory = 0usize;

    let horizon_tol = 1e-12 * plan.t_end.max(1.0);
    while cur.time() < plan.t_end - horizon_tol {
        let t = cur.time();
        let mut dt = plan.dt;
        if plan.adapt && plan.equation == Equation::Rescaled && p.b > 0.0 {
            dt = dt.min(plan.adapt_c * (1.0 - p.b * t));
        }
        let mut lands_mandatory = false;
        if next_mandatory < mandatory.len() {
            let mt = mandatory[next_mandatory];
            if mt - t <= dt * (1.0 + 1e-12) {
                dt = mt - t;
                lands_mandatory = true;
            }
        }
        if plan.t_end - t <= dt * (1.0 + 1e-12) {
            dt = plan.t_end - t;
            lands_mandatory = next_mandatory < mandatory.len()
                && (mandatory[next_mandatory] - plan.t_end).abs() < 1e-12;
        }

        cur = strang_step(&cur, dt, p, plan.equation)?;
        if lands_mandatory {
            // Pin the stamp to the requested time to keep lookups exact.
            cur = cur.with_time(mandatory[next_mandatory].min(plan.t_end));
            next_mandatory += 1;
        }
        steps += 1;

        if !cur.is_finite() {
            return Err(CoreError::NonFinite { t: cur.time() });
        }
        if track_f {
            let min_inner = cur.min_abs_inner();
            if min_inner < MAGNITUDE_FLOOR {
                return Err(CoreError::MagnitudeFloor {
                    t: cur.time(),
                    min: min_inner,
                    floor: MAGNITUDE_FLOOR,
                });
            }
        }

        let g_new = dissipation_integrand(&cur, p, plan.equation);
        dissipation += 0.5 * (g_prev + g_new) * dt;
        g_prev = g_new;
        if track_f {
            let fi_new = f_integrand(&cur, p.alpha);
            for ((acc, a), b) in f_quadrature.iter_mut().zip(&fi_prev).zip(&fi_new) {
                *acc += 0.5 * (a + b) * dt;
            }
            fi_prev = fi_new;
        }

        let at_end = cur.time() >= plan.t_end - horizon_tol;
        if steps % plan.snapshot_stride == 0 || lands_mandatory || at_end {
            snapshots.push(Snapshot {
                field: cur.clone(),
                f_quadrature: f_quadrature.clone(),
                dissipation,
                step: steps,
            });
        }
    }

    Ok(Trajectory {
        params: *p,
        plan: plan.clone(),
        snapshots,
        steps,
        tracked_f: track_f,
    })
}

/// Relative mass-ledger residual at every snapshot:
/// `| ||v(t)||^2 + 2 |Re lambda| D(t) - ||v_0||^2 | / ||v_0||^2`,
/// where `D` is the accumulated (weighted) dissipation integral. A faithful
/// run keeps this at quadrature accuracy; `Re lambda = 0` reduces it to a
/// mass-conservation check.
pub fn ledger_residual(traj: &Trajectory) -> Vec<(f64, f64)> {
    let m0 = traj.initial().field.l2_norm().powi(2);
    let coef = 2.0 * traj.params.lambda.re.abs();
    traj.snapshots
        .iter()
        .map(|s| {
            let m = s.field.l2_norm().powi(2);
            ((s.time()), ((m + coef * s.dissipation - m0) / m0).abs())
        })
        .collect()
}

/// Exact solution of the space-free companion ODE
/// `dz/dt = lambda (1 - b t)^{-(4 - dim*alpha)/2} |z|^alpha z` at time `t`:
/// the nonlinear flow over the effective time `int_0^t` of the weight.
pub fn ode_oracle(z0: C64, t: f64, p: &ModelParams) -> Result<C64> {
    let tau = effective_tau(0.0, t, p)?;
    Ok(nonlinear_flow_scalar(z0, tau, p.lambda, p.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    fn params(lambda: C64, alpha: f64, dim: usize, b: f64) -> ModelParams {
        ModelParams::new(lambda, alpha, dim, b, 1.0).unwrap()
    }

    #[test]
    fn scalar_flow_matches_closed_forms() {
        // lambda = -1 + i, alpha = 1, tau = 1, z0 = 1:
        // g = 2, r = 1/2, phase = -(1/(1*(-1))) ln 2 = +ln 2.
        let z = nonlinear_flow_scalar(
            C64::new(1.0, 0.0),
            1.0,
            Complex64::new(-1.0, 1.0),
            1.0,
        );
        assert_relative_eq!(z.norm(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(z.arg(), std::f64::consts::LN_2, max_relative = 1e-15);

        // lambda = -1, alpha = 2, tau = 1/2: r = (1 + 2*0.5)^{-1/2} = 2^{-1/2}.
        let z2 = nonlinear_flow_scalar(
            C64::new(1.0, 0.0),
            0.5,
            Complex64::new(-1.0, 0.0),
            2.0,
        );
        assert_relative_eq!(z2.norm(), 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(z2.arg(), 0.0);

        // Conservative coupling only rotates the phase.
        let z3 = nonlinear_flow_scalar(
            C64::from_polar(2.0, 0.3),
            0.7,
            Complex64::new(0.0, 1.5),
            1.0,
        );
        assert_relative_eq!(z3.norm(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(z3.arg(), 0.3 + 1.5 * 2.0 * 0.7, max_relative = 1e-14);

        // Origin is fixed; lambda = 0 is the identity.
        assert_eq!(nonlinear_flow_scalar(C64::new(0.0, 0.0), 5.0, Complex64::new(-1.0, 2.0), 1.0),
            C64::new(0.0, 0.0));
        let z4 = nonlinear_flow_scalar(C64::new(0.3, -0.4), 2.0, Complex64::new(0.0, 0.0), 1.0);
        assert_relative_eq!(z4.re, 0.3, max_relative = 1e-15);
        assert_relative_eq!(z4.im, -0.4, max_relative = 1e-15);
    }

    #[test]
    fn scalar_flow_composes_like_a_semigroup() {
        let lam = Complex64::new(-0.8, 0.6);
        let z0 = C64::from_polar(1.7, -0.9);
        let whole = nonlinear_flow_scalar(z0, 1.3, lam, 1.4);
        let split = nonlinear_flow_scalar(nonlinear_flow_scalar(z0, 0.5, lam, 1.4), 0.8, lam, 1.4);
        assert!((whole - split).norm() < 1e-14);
    }

    #[test]
    fn scalar_flow_matches_a_numerical_integration() {
        // Crude RK4 on dz/dtau = lambda |z|^alpha z as an independent check.
        let lam = Complex64::new(-1.0, 0.7);
        let alpha = 1.3;
        let rhs = |z: C64| lam * z.norm().powf(alpha) * z;
        let mut z = C64::new(0.9, 0.4);
        let n = 20000;
        let h = 0.8 / n as f64;
        for _ in 0..n {
            let k1 = rhs(z);
            let k2 = rhs(z + 0.5 * h * k1);
            let k3 = rhs(z + 0.5 * h * k2);
            let k4 = rhs(z + h * k3);
            z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let exact = nonlinear_flow_scalar(C64::new(0.9, 0.4), 0.8, lam, alpha);
        assert!((z - exact).norm() < 1e-12, "diff = {}", (z - exact).norm());
    }

    #[test]
    fn effective_tau_closed_forms() {
        // b = 1, dim*alpha = 1: 2((1-b(t+dt))^{-1/2} - 1) = 2(sqrt(2) - 1).
        let p = params(C64::new(-1.0, 0.0), 1.0, 1, 1.0);
        let tau = effective_tau(0.0, 0.5, &p).unwrap();
        assert_relative_eq!(tau, 2.0 * (2.0f64.sqrt() - 1.0), max_relative = 1e-14);

        // b = 0 reduces to dt.
        let p0 = params(C64::new(-1.0, 0.0), 1.0, 1, 0.0);
        assert_eq!(effective_tau(0.3, 0.25, &p0).unwrap(), 0.25);

        // Critical power dim*alpha = 2: logarithmic form.
        let pc = params(C64::new(-1.0, 0.0), 1.0, 2, 1.0);
        assert_relative_eq!(
            effective_tau(0.0, 0.5, &pc).unwrap(),
            2.0f64.ln(),
            max_relative = 1e-14
        );

        // The general form passes continuously through the critical power.
        let pn = params(C64::new(-1.0, 0.0), 1.0 - 1e-9, 2, 1.0);
        assert_relative_eq!(
            effective_tau(0.0, 0.5, &pn).unwrap(),
            2.0f64.ln(),
            max_relative = 1e-8
        );

        // Larger than dt whenever the weight exceeds 1.
        let tau2 = effective_tau(0.3, 0.2, &p).unwrap();
        assert!(tau2 > 0.2);

        // Reaching the singularity is an error.
        assert!(effective_tau(0.6, 0.4, &p).is_err());
    }

    #[test]
    fn effective_tau_matches_a_quadrature() {
        let p = params(C64::new(-0.5, 0.2), 1.7, 1, 3.0);
        let (t, dt) = (0.05, 0.21);
        // Simpson on the weight integrand.
        let n = 4000;
        let h = dt / n as f64;
        let w = |s: f64| (1.0 - p.b * s).powf(-p.weight_exponent());
        let mut acc = w(t) + w(t + dt);
        for i in 1..n {
            acc += w(t + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc *= h / 3.0;
        assert_relative_eq!(effective_tau(t, dt, &p).unwrap(), acc, max_relative = 1e-12);
    }

    #[test]
    fn strang_step_is_exact_when_parts_commute() {
        // A plane wave keeps |v| constant in both substeps, so splitting is
        // exact for it: v(t) = e^{i xi x} e^{-i xi^2 t} z(t) with z the
        // scalar flow (autonomous case).
        let g = Grid::new(1, 10.0, 64).unwrap();
        let xi = 3.0 * std::f64::consts::PI / 10.0;
        let p = params(C64::new(-1.0, 0.5), 1.0, 1, 0.0);
        let v0 = Field::from_fn(g.clone(), 0.0, |x| C64::from_polar(1.0, xi * x[0]));
        let dt = 0.3;
        let out = strang_step(&v0, dt, &p, Equation::Autonomous).unwrap();
        let z = nonlinear_flow_scalar(C64::new(1.0, 0.0), dt, p.lambda, p.alpha);
        let expect = Field::from_fn(g, 0.0, |x| {
            C64::from_polar(1.0, xi * x[0] - xi * xi * dt) * z
        });
        let err = out
            .values()
            .iter()
            .zip(expect.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "err = {err}");
        assert_relative_eq!(out.time(), dt);
    }

    #[test]
    fn stepper_is_second_order_on_the_rescaled_equation() {
        let g = Grid::new(1, 15.0, 64).unwrap();
        let p = params(C64::new(-1.0, 0.4), 1.5, 1, 1.0);
        let v0 = Field::from_fn(g, 0.0, |x| {
            C64::new((-x[0] * x[0] / 4.0).exp(), 0.2 * (-x[0] * x[0] / 6.0).exp())
        });
        let t_end = 0.32;
        let advance = |dt: f64| {
            let mut f = v0.clone();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                f = strang_step(&f, dt, &p, Equation::Rescaled).unwrap();
            }
            f
        };
        let reference = advance(1e-4);
        let err = |dt: f64| {
            let f = advance(dt);
            f.values()
                .iter()
                .zip(reference.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let e1 = err(4e-3);
        let e2 = err(2e-3);
        let ratio = e1 / e2;
        assert!(
            (3.5..4.5).contains(&ratio),
            "expected ~4x error reduction, got {ratio} (e1 = {e1:e}, e2 = {e2:e})"
        );
    }

    #[test]
    fn autonomous_gaussian_run_closes_the_mass_ledger() {
        let g = Grid::new(1, 20.0, 128).unwrap();
        let p = params(C64::new(-1.0, 0.0), 1.0, 1, 0.0);
        let v0 = Field::from_fn(g, 0.0, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let mut plan = StepPlan::new(Equation::Autonomous, 1e-3, 0.25);
        plan.snapshot_stride = 50;
        let traj = run(&v0, &plan, &p).unwrap();
        assert!(traj.last().dissipation > 0.0);
        // Mass must strictly decrease under dissipative coupling.
        assert!(traj.last().field.l2_norm() < traj.initial().field.l2_norm());
        for (t, r) in ledger_residual(&traj) {
            assert!(r < 1e-6, "ledger residual {r:e} at t = {t}");
        }
    }

    #[test]
    fn conservative_run_preserves_mass() {
        let g = Grid::new(1, 15.0, 64).unwrap();
        let p = params(C64::new(0.0, 1.0), 1.0, 1, 0.0);
        let v0 = Field::from_fn(g, 0.0, |x| C64::new((-x[0] * x[0] / 3.0).exp(), 0.0));
        let plan = StepPlan::new(Equation::Autonomous, 1e-3, 0.2);
        let traj = run(&v0, &plan, &p).unwrap();
        for (t, r) in ledger_residual(&traj) {
            assert!(r < 1e-12, "mass drift {r:e} at t = {t}");
        }
    }

    #[test]
    fn snapshots_follow_the_stride_and_hit_mandatory_times() {
        let g = Grid::new(1, 15.0, 32).unwrap();
        let p = params(C64::new(-1.0, 0.0), 1.0, 1, 2.0);
        let v0 = Field::from_fn(g, 0.0, |x| C64::new(1.0 / (1.0 + x[0] * x[0]), 0.0));
        let mut plan = StepPlan::new(Equation::Rescaled, 1e-2, 0.4);
        plan.snapshot_stride = 7;
        plan.adapt_c = 0.1;
        plan.mandatory_times = vec![0.123, 0.31];
        let traj = run(&v0, &plan, &p).unwrap();
        let times = traj.times();
        for w in times.windows(2) {
            assert!(w[1] > w[0], "snapshot times must increase: {times:?}");
        }
        assert!(traj.snapshot_at(0.123, 1e-12).is_some());
        assert!(traj.snapshot_at(0.31, 1e-12).is_some());
        assert_relative_eq!(traj.last().time(), 0.4, max_relative = 1e-12);
        // Interior non-mandatory snapshots sit on stride multiples.
        for s in &traj.snapshots {
            let t = s.time();
            let is_mandatory = [0.123, 0.31].iter().any(|m| (t - m).abs() < 1e-12);
            let is_edge = s.step == 0 || (t - 0.4).abs() < 1e-12;
            if !is_mandatory && !is_edge {
                assert_eq!(s.step % 7, 0, "stray snapshot at step {}", s.step);
            }
        }
    }

    #[test]
    fn resumed_run_reproduces_an_uninterrupted_one() {
        let g = Grid::new(1, 15.0, 64).unwrap();
        let p = params(C64::new(-1.0, 0.3), 1.5, 1, 2.0);
        let v0 = Field::from_fn(g, 0.0, |x| C64::new(1.0 / (1.0 + x[0] * x[0]), 0.0));
        let mut plan = StepPlan::new(Equation::Rescaled, 2e-3, 0.45);
        plan.snapshot_stride = 10;
        // Break at a time an uninterrupted run reaches exactly.
        plan.mandatory_times = vec![0.2];
        let full = run(&v0, &plan, &p).unwrap();

        let mut first_leg = plan.clone();
        first_leg.t_end = 0.2;
        first_leg.mandatory_times = vec![];
        let half = run(&v0, &first_leg, &p).unwrap();
        let cut = half.last();
        let carry = Carry {
            f_quadrature: cut.f_quadrature.clone(),
            dissipation: cut.dissipation,
            steps_done: cut.step,
        };
        let mut second_leg = plan.clone();
        second_leg.mandatory_times = vec![];
        let resumed = run_with_carry(&cut.field, &second_leg, &p, carry).unwrap();

        let a = full.last();
        let b = resumed.last();
        assert_eq!(a.step, b.step);
        let state_diff = a
            .field
            .values()
            .iter()
            .zip(b.field.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(state_diff < 1e-13, "state diff {state_diff:e}");
        assert_relative_eq!(a.dissipation, b.dissipation, max_relative = 1e-12);
        let fq_diff = a
            .f_quadrature
            .iter()
            .zip(&b.f_quadrature)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(fq_diff < 1e-12, "quadrature diff {fq_diff:e}");
    }

    #[test]
    fn quadrature_floor_aborts_thin_tailed_rescaled_runs() {
        // A Gaussian is ~1e-22 at the inner half-domain edge of [-20, 20):
        // tracking the |v|^{-alpha-1} quadrature there is meaningless and
        // must abort rather than accumulate garbage.
        let g = Grid::new(1, 20.0, 64).unwrap();
        let p = params(C64::new(-1.0, 0.0), 1.0, 1, 1.0);
        let v0 = Field::from_fn(g, 0.0, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let plan = StepPlan::new(Equation::Rescaled, 1e-3, 0.5);
        match run(&v0, &plan, &p) {
            Err(CoreError::MagnitudeFloor { .. }) => {}
            other => panic!("expected the magnitude-floor abort, got {other:?}"),
        }
        // Explicitly disabling the quadrature lets the same run finish.
        let mut plan_off = StepPlan::new(Equation::Rescaled, 1e-3, 0.5);
        plan_off.track_f = Some(false);
        let traj = run(&v0, &plan_off, &p).unwrap();
        assert!(!traj.tracked_f);
        assert!(traj.last().f_quadrature.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn plan_validation_rejects_bad_horizons() {
        let p = params(C64::new(-1.0, 0.0), 1.0, 1, 4.0);
        let plan = StepPlan::new(Equation::Rescaled, 1e-3, 0.3);
        assert!(plan.validate(&p).is_err()); // t_end >= 1/b = 0.25
        let ok = StepPlan::new(Equation::Rescaled, 1e-3, 0.2);
        ok.validate(&p).unwrap();
        let mut bad_c = StepPlan::new(Equation::Autonomous, 1e-3, 0.2);
        bad_c.adapt_c = 0.2;
        assert!(bad_c.validate(&p).is_err());
        let mut bad_mt = StepPlan::new(Equation::Autonomous, 1e-3, 0.2);
        bad_mt.mandatory_times = vec![0.5];
        assert!(bad_mt.validate(&p).is_err());
    }

    #[test]
    fn ode_oracle_reduces_to_the_scalar_flow() {
        let p = params(C64::new(-1.0, 0.5), 1.2, 1, 2.0);
        let z0 = C64::new(0.8, -0.1);
        let t = 0.4;
        let tau = effective_tau(0.0, t, &p).unwrap();
        let direct = nonlinear_flow_scalar(z0, tau, p.lambda, p.alpha);
        let via = ode_oracle(z0, t, &p).unwrap();
        assert!((direct - via).norm() < 1e-15);
        // And for b = 0 it is the plain autonomous flow.
        let p0 = params(C64::new(-1.0, 0.5), 1.2, 1, 0.0);
        let auto = ode_oracle(z0, t, &p0).unwrap();
        assert!((auto - nonlinear_flow_scalar(z0, t, p0.lambda, p0.alpha)).norm() < 1e-15);
    }
}
