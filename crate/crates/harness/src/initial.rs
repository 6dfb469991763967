//! Initial-data families.
//!
//! Every family samples a closed-form expression on the grid nodes at time
//! zero. The two power-decay families keep the weighted lower bound
//! `inf_x <x>^n |v_0| > 0` that the strict parameter regime requires; the
//! Gaussian deliberately does not and is therefore rejected when
//! `theorem_mode` is set.
//!
//! The perturbed family is the only randomized one. Its perturbation is a
//! band-limited trigonometric sum along the diagonal direction with
//! coefficients drawn from a seeded ChaCha stream, rescaled *after* sampling
//! so that `sup_x <x>^n |phi| = |c| - epsilon` holds exactly on the grid; by
//! the triangle inequality the combined datum then satisfies
//! `<x>^n |v_0| >= epsilon` at every node, whatever the draw was. The same
//! seed always reproduces the same field bit for bit.

use dnls_core::{C64, Field, Grid, IndexSet};
use dnls_core::seminorm::seminorms;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::{FamilyKind, InitialSpec};
use crate::{HarnessError, Result};

/// A sampled initial datum plus its a-priori size report.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub field: Field,
    /// The data bound `K = ||v_0||_X + (inf <x>^n |v_0|)^{-1}` for the
    /// families that admit one; `None` for the Gaussian, whose weighted
    /// infimum is numerically zero.
    pub k_value: Option<f64>,
    /// Measured `inf_x <x>^n |v_0|` on the grid.
    pub inf_weighted: f64,
}

fn bracket(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|c| c * c).sum();
    (1.0 + r2).sqrt()
}

/// Sample the configured family on `grid` at time zero.
pub fn make_initial_data(
    spec: &InitialSpec,
    grid: &Grid,
    idx: &IndexSet,
    seed: u64,
    theorem_mode: bool,
) -> Result<PreparedData> {
    let c = C64::new(spec.c_re, spec.c_im);
    let n = spec.n as f64;
    let field = match spec.family {
        FamilyKind::PowerDecay => {
            if c.norm() == 0.0 {
                return Err(HarnessError::InitialData(
                    "power-decay prefactor c must be nonzero".into(),
                ));
            }
            Field::from_fn(grid.clone(), 0.0, |x| c * bracket(x).powf(-n))
        }
        FamilyKind::PerturbedPowerDecay => perturbed_power_decay(spec, grid, seed, c, n)?,
        FamilyKind::Gaussian => {
            if theorem_mode {
                return Err(HarnessError::InitialData(
                    "the gaussian family has no weighted lower bound and is \
                     not admissible in theorem mode"
                        .into(),
                ));
            }
            if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
                return Err(HarnessError::InitialData(format!(
                    "gaussian width must be positive (got {})",
                    spec.sigma
                )));
            }
            if spec.amplitude == 0.0 || !spec.amplitude.is_finite() {
                return Err(HarnessError::InitialData(format!(
                    "gaussian amplitude must be nonzero (got {})",
                    spec.amplitude
                )));
            }
            let a = spec.amplitude;
            let two_s2 = 2.0 * spec.sigma * spec.sigma;
            Field::from_fn(grid.clone(), 0.0, |x| {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                C64::new(a * (-r2 / two_s2).exp(), 0.0)
            })
        }
    };

    let table = seminorms(&field, idx)?;
    let k_value = match spec.family {
        FamilyKind::Gaussian => None,
        _ => {
            if table.inf_weighted <= 0.0 {
                return Err(HarnessError::InitialData(
                    "sampled datum lost its weighted lower bound".into(),
                ));
            }
            Some(table.x_norm + 1.0 / table.inf_weighted)
        }
    };
    Ok(PreparedData { field, k_value, inf_weighted: table.inf_weighted })
}

fn perturbed_power_decay(
    spec: &InitialSpec,
    grid: &Grid,
    seed: u64,
    c: C64,
    n: f64,
) -> Result<Field> {
    let margin = c.norm() - spec.epsilon;
    if !(spec.epsilon > 0.0 && margin > 0.0) {
        return Err(HarnessError::InitialData(format!(
            "perturbed family needs 0 < epsilon < |c| (epsilon = {}, |c| = {})",
            spec.epsilon,
            c.norm()
        )));
    }
    if spec.modes == 0 {
        return Err(HarnessError::InitialData("modes must be >= 1".into()));
    }
    if spec.modes > grid.points() / 8 {
        return Err(HarnessError::InitialData(format!(
            "{} perturbation modes are too oscillatory for {} points per axis \
             (keep modes <= points/8)",
            spec.modes,
            grid.points()
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut cos_coef = Vec::with_capacity(spec.modes);
    let mut sin_coef = Vec::with_capacity(spec.modes);
    for _ in 0..spec.modes {
        cos_coef.push(C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        sin_coef.push(C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    }

    // The trig sum rides the diagonal coordinate so a single stream of
    // coefficients covers every dimension; k pi (x_1 + ... + x_d) / L is
    // 2L-periodic in each axis separately.
    let l = grid.half_width();
    let trig = |x: &[f64]| {
        let xi: f64 = x.iter().sum();
        let mut acc = C64::new(0.0, 0.0);
        for (k, (a, s)) in cos_coef.iter().zip(&sin_coef).enumerate() {
            let phase = (k + 1) as f64 * std::f64::consts::PI * xi / l;
            acc += a * phase.cos() + s * phase.sin();
        }
        acc
    };

    let raw = Field::from_fn(grid.clone(), 0.0, |x| trig(x));
    let sup = raw.sup_norm();
    if !(sup > 0.0) {
        return Err(HarnessError::InitialData(
            "perturbation sampled to zero; change the seed or the mode count".into(),
        ));
    }
    let scale = margin / sup;
    let mut it = raw.values().iter();
    Ok(Field::from_fn(grid.clone(), 0.0, |x| {
        let w = bracket(x).powf(-n);
        let phi = *it.next().expect("same grid, same node count") * scale;
        (c + phi) * w
    }))
}
