//! Weighted Sobolev seminorm families, the norm of the analysis space, and
//! the time-weighted growth monitors.
//!
//! For indices `(k, n, m, J)` the families are
//! - `fam1(l) = max_{|beta| <= l} || <x>^n D^beta v ||_inf` for `l <= 2m`,
//! - `fam2(l) = max_{2m+1 <= |beta| <= l} || <x>^n D^beta v ||_2`
//!   for `2m+1 <= l <= 2m+2+k`,
//! - `fam3(l) = max_{2m+3+k <= |beta| <= l} || <x>^{J-l} D^beta v ||_2`
//!   for `2m+3+k <= l <= J`,
//!
//! and the space norm is
//! `sum_{c=0}^{2m} sup_{|beta|=c} || <x>^n D^beta v ||_inf
//!  + sum_{p=0}^{k+1} sum_{s=0}^{n} sum_{|beta| = p+s+2m+1}
//!    || <x>^{n-s} D^beta v ||_2`.
//!
//! The monitors weight each family by `(1 - b t)^{sigma_j}` along a
//! trajectory; their joint supremum is the bootstrap quantity that must stay
//! below `4K` for the decay mechanism to persist.

use crate::error::{CoreError, Result};
use crate::grid::Field;
use crate::integrator::{Equation, Trajectory};
use crate::params::{IndexSet, ModelParams, SigmaSchedule, MAX_DERIVATIVE_ORDER};
use crate::spectral::{derivative, spectral_tail_ratio};

/// Spectral-tail ratio above which derivative orders near `J` are considered
/// unreliable on this grid.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// All multi-indices of the given total order in `dim` axes.
pub fn multi_indices(dim: usize, order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    match dim {
        1 => out.push([order, 0, 0]),
        2 => {
            for a in 0..=order {
                out.push([a, order - a, 0]);
            }
        }
        _ => {
            for a in 0..=order {
                for b in 0..=(order - a) {
                    out.push([a, b, order - a - b]);
                }
            }
        }
    }
    out
}

/// One field's seminorm families, space norm, and weighted lower bound.
#[derive(Clone, Debug)]
pub struct SeminormTable {
    pub t: f64,
    pub idx: IndexSet,
    fam1: Vec<f64>,
    fam2: Vec<f64>,
    fam3: Vec<f64>,
    pub x_norm: f64,
    /// `inf_x <x>^n |v|` over the grid.
    pub inf_weighted: f64,
    /// Measured spectral tail ratio of the field.
    pub tail_ratio: f64,
    /// Whether the grid resolves derivatives up to order `J`
    /// (`tail_ratio <= TAIL_TOLERANCE`); entries are still computed when
    /// false, but the high orders are unreliable.
    pub tail_ok: bool,
}

impl SeminormTable {
    /// `fam1(l)` for `0 <= l <= 2m`; zero outside.
    pub fn fam1(&self, l: usize) -> f64 {
        self.fam1.get(l).copied().unwrap_or(0.0)
    }

    /// `fam2(l)` for `2m+1 <= l <= 2m+2+k`; zero outside.
    pub fn fam2(&self, l: usize) -> f64 {
        let lo = 2 * self.idx.m + 1;
        if (lo..=2 * self.idx.m + 2 + self.idx.k).contains(&l) {
            self.fam2[l - lo]
        } else {
            0.0
        }
    }

    /// `fam3(l)` for `2m+3+k <= l <= J`; zero outside.
    pub fn fam3(&self, l: usize) -> f64 {
        let lo = 2 * self.idx.m + 3 + self.idx.k;
        if (lo..=self.idx.j).contains(&l) {
            self.fam3[l - lo]
        } else {
            0.0
        }
    }
}

fn weighted_sup(values: &[crate::grid::C64], w: &[f64]) -> f64 {
    values
        .iter()
        .zip(w)
        .map(|(z, wi)| wi * z.norm())
        .fold(0.0, f64::max)
}

fn weighted_l2(values: &[crate::grid::C64], w: &[f64], measure: f64) -> f64 {
    (measure
        * values
            .iter()
            .zip(w)
            .map(|(z, wi)| wi * wi * z.norm_sqr())
            .sum::<f64>())
    .sqrt()
}

/// Compute the full seminorm table of one field.
pub fn seminorms(f: &Field, idx: &IndexSet) -> Result<SeminormTable> {
    if idx.j != 2 * idx.m + 2 + idx.k + idx.n {
        return Err(CoreError::Params(format!(
            "inconsistent indices: J = {} but 2m + 2 + k + n = {}",
            idx.j,
            2 * idx.m + 2 + idx.k + idx.n
        )));
    }
    if idx.j > MAX_DERIVATIVE_ORDER {
        return Err(CoreError::DerivativeOrder { order: idx.j, cap: MAX_DERIVATIVE_ORDER });
    }
    let grid = f.grid();
    let dim = grid.dim();
    let measure = grid.cell_measure();
    let tail_ratio = spectral_tail_ratio(f);
    let tail_ok = tail_ratio <= TAIL_TOLERANCE;

    // All weight exponents in play lie in 0..=n (for fam3, J - l <= n - 1).
    let weights: Vec<Vec<f64>> =
        (0..=idx.n).map(|e| grid.weight_vector(e as f64)).collect();

    let two_m = 2 * idx.m;
    let f2_lo = two_m + 1;
    let f2_hi = two_m + 2 + idx.k;
    let f3_lo = two_m + 3 + idx.k;

    let mut per_order_sup = vec![0.0f64; two_m + 1];
    let mut fam2_by_order = vec![0.0f64; f2_hi + 1];
    let mut fam3 = vec![0.0f64; idx.j - f3_lo + 1];
    let mut x_l2_sum = 0.0f64;

    for order in 0..=idx.j {
        for beta in multi_indices(dim, order) {
            let d = derivative(f, &beta[..dim])?;
            let dv = d.values();
            if order <= two_m {
                let s = weighted_sup(dv, &weights[idx.n]);
                if s > per_order_sup[order] {
                    per_order_sup[order] = s;
                }
            }
            if (f2_lo..=f2_hi).contains(&order) {
                let s = weighted_l2(dv, &weights[idx.n], measure);
                if s > fam2_by_order[order] {
                    fam2_by_order[order] = s;
                }
            }
            if order >= f3_lo {
                for l in order..=idx.j {
                    let s = weighted_l2(dv, &weights[idx.j - l], measure);
                    let slot = &mut fam3[l - f3_lo];
                    if s > *slot {
                        *slot = s;
                    }
                }
            }
            if order > two_m {
                // Triple sum of the space norm: |beta| = p + s + 2m + 1 with
                // 0 <= p <= k+1, 0 <= s <= n; the same order can contribute
                // several times with different weights.
                let q = order - two_m - 1;
                for s in 0..=q.min(idx.n) {
                    let p = q - s;
                    if p <= idx.k + 1 {
                        x_l2_sum += weighted_l2(dv, &weights[idx.n - s], measure);
                    }
                }
            }
        }
    }

    let x_norm = per_order_sup.iter().sum::<f64>() + x_l2_sum;

    let mut fam1 = per_order_sup;
    for l in 1..fam1.len() {
        fam1[l] = fam1[l].max(fam1[l - 1]);
    }
    let mut fam2 = Vec::with_capacity(f2_hi - f2_lo + 1);
    let mut running = 0.0f64;
    for order in f2_lo..=f2_hi {
        running = running.max(fam2_by_order[order]);
        fam2.push(running);
    }
    for l in 1..fam3.len() {
        fam3[l] = fam3[l].max(fam3[l - 1]);
    }

    Ok(SeminormTable {
        t: f.time(),
        idx: *idx,
        fam1,
        fam2,
        fam3,
        x_norm,
        inf_weighted: f.weighted_inf(idx.n as f64),
        tail_ratio,
        tail_ok,
    })
}

/// The predicted pointwise ceiling for `||v(t)||_inf^alpha` at `t > 0`:
/// `(b (2 - dim*alpha) / (2 alpha |Re lambda|)) (1-bt)^{nu} / (1 - (1-bt)^{nu})`
/// with `nu = (2 - dim*alpha)/2`. `None` outside the regime where the bound
/// is stated (`b > 0`, `Re lambda < 0`, `dim*alpha < 2`, `0 < t < 1/b`).
pub fn sup_decay_bound(p: &ModelParams, t: f64) -> Option<f64> {
    let nu = p.nu();
    if !(p.b > 0.0 && p.lambda.re < 0.0 && nu > 0.0 && t > 0.0) {
        return None;
    }
    let s = 1.0 - p.b * t;
    if s <= 0.0 {
        return None;
    }
    let sn = s.powf(nu);
    Some(p.b * (2.0 - p.dim as f64 * p.alpha) / (2.0 * p.alpha * p.lambda.re.abs()) * sn
        / (1.0 - sn))
}

/// Growth monitors along a trajectory.
#[derive(Clone, Debug)]
pub struct MonitorReport {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    /// `max(phi1, phi2, phi3)`.
    pub phi_t: f64,
    /// `max(phi_t, phi4)` — the bootstrap quantity.
    pub psi_t: f64,
    /// Whether `psi_t <= 4K`.
    pub bound_4k_ok: bool,
    /// First snapshot time whose instantaneous contribution exceeds `4K`.
    pub first_violation: Option<f64>,
    /// Instantaneous `max` of all weighted contributions per snapshot.
    pub per_snapshot_psi: Vec<(f64, f64)>,
    /// Per snapshot with `t > 0` (when the bound applies): whether
    /// `||v||_inf^alpha` sits under [`sup_decay_bound`].
    pub decay_bound_ok: Vec<(f64, bool)>,
    /// The seminorm table of every snapshot, in trajectory order.
    pub tables: Vec<SeminormTable>,
}

/// Evaluate the monitors over all stored snapshots.
pub fn monitors(
    traj: &Trajectory,
    sched: &SigmaSchedule,
    idx: &IndexSet,
) -> Result<MonitorReport> {
    let p = &traj.params;
    let b_eff = match traj.plan.equation {
        Equation::Rescaled => p.b,
        Equation::Autonomous => 0.0,
    };
    let four_k = 4.0 * p.k_bound;
    let two_m = 2 * idx.m;
    let f2_lo = two_m + 1;
    let f2_hi = two_m + 2 + idx.k;
    let f3_lo = two_m + 3 + idx.k;

    let (mut phi1, mut phi2, mut phi3, mut phi4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut per_snapshot_psi = Vec::with_capacity(traj.snapshots.len());
    let mut decay_bound_ok = Vec::new();
    let mut first_violation = None;
    let mut tables = Vec::with_capacity(traj.snapshots.len());

    for snap in &traj.snapshots {
        let t = snap.time();
        let table = seminorms(&snap.field, idx)?;
        if table.inf_weighted == 0.0 {
            return Err(CoreError::Params(format!(
                "inf <x>^n |v| vanished at t = {t}: the lower-bound monitor is undefined"
            )));
        }
        let decay = 1.0 - b_eff * t;
        let w = |sigma: f64| decay.powf(sigma);

        let p1 = (0..=two_m)
            .map(|j| w(sched.get(j)) * table.fam1(j))
            .fold(0.0, f64::max);
        let p2 = (f2_lo..=f2_hi)
            .map(|j| w(sched.get(j)) * table.fam2(j))
            .fold(0.0, f64::max);
        let p3 = (f3_lo..=idx.j)
            .map(|j| w(sched.get(j)) * table.fam3(j))
            .fold(0.0, f64::max);
        let p4 = w(sched.get(1)) / table.inf_weighted;

        phi1 = phi1.max(p1);
        phi2 = phi2.max(p2);
        phi3 = phi3.max(p3);
        phi4 = phi4.max(p4);

        let psi_here = p1.max(p2).max(p3).max(p4);
        per_snapshot_psi.push((t, psi_here));
        if psi_here > four_k && first_violation.is_none() {
            first_violation = Some(t);
        }

        if let Some(bound) = sup_decay_bound(p, t) {
            let lhs = snap.field.sup_norm().powf(p.alpha);
            decay_bound_ok.push((t, lhs <= bound * (1.0 + 1e-9)));
        }
        tables.push(table);
    }

    let phi_t = phi1.max(phi2).max(phi3);
    let psi_t = phi_t.max(phi4);
    Ok(MonitorReport {
        phi1,
        phi2,
        phi3,
        phi4,
        phi_t,
        psi_t,
        bound_4k_ok: psi_t <= four_k,
        first_violation,
        per_snapshot_psi,
        decay_bound_ok,
        tables,
    })
}
