//! Model parameters, Sobolev-index bookkeeping, the exponent ladder used by
//! the time-weighted monitors, and the smallness/largeness thresholds that
//! delimit the regime in which the decay estimates are guaranteed.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Largest derivative order the spectral engine will evaluate.
pub const MAX_DERIVATIVE_ORDER: usize = 16;

/// Physical and model parameters of the focusing-free dissipative equation
/// `d_t u = i Lap u + lambda |u|^alpha u` and of its rescaled, nonautonomous
/// companion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Complex coupling `lambda`; the dissipative regime has `Re lambda < 0`.
    pub lambda: Complex64,
    /// Nonlinearity power `alpha`, with `0 < alpha <= 2/dim`.
    pub alpha: f64,
    /// Spatial dimension (1, 2, or 3).
    pub dim: usize,
    /// Rescaling rate `b >= 0`; `b = 0` means no rescaling.
    pub b: f64,
    /// A-priori data bound `K >= 1` used by the thresholds and monitors.
    pub k_bound: f64,
}

impl ModelParams {
    pub fn new(lambda: Complex64, alpha: f64, dim: usize, b: f64, k_bound: f64) -> Result<Self> {
        let p = ModelParams { lambda, alpha, dim, b, k_bound };
        p.validate(false)?;
        Ok(p)
    }

    /// Check basic invariants. With `theorem_mode` the strict inequalities of
    /// the decay regime are enforced (`Re lambda < 0`, `alpha < 2/dim`).
    pub fn validate(&self, theorem_mode: bool) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(CoreError::Params(format!("dim must be 1, 2, or 3 (got {})", self.dim)));
        }
        if !self.lambda.re.is_finite() || !self.lambda.im.is_finite() {
            return Err(CoreError::Params("lambda must be finite".into()));
        }
        if self.lambda.re > 0.0 {
            return Err(CoreError::Params(format!(
                "Re lambda must be <= 0 (got {}); the amplitude flow blows up otherwise",
                self.lambda.re
            )));
        }
        let a_max = 2.0 / self.dim as f64;
        if !(self.alpha > 0.0 && self.alpha <= a_max) || !self.alpha.is_finite() {
            return Err(CoreError::Params(format!(
                "alpha must lie in (0, {a_max}] for dim {} (got {})",
                self.dim, self.alpha
            )));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(CoreError::Params(format!("b must be finite and >= 0 (got {})", self.b)));
        }
        if !(self.k_bound >= 1.0) || !self.k_bound.is_finite() {
            return Err(CoreError::Params(format!("K must be >= 1 (got {})", self.k_bound)));
        }
        if theorem_mode {
            if !(self.lambda.re < 0.0) {
                return Err(CoreError::Params(
                    "decay regime needs strictly dissipative coupling (Re lambda < 0)".into(),
                ));
            }
            if !(self.alpha < a_max) {
                return Err(CoreError::Params(format!(
                    "decay regime needs alpha strictly below 2/dim = {a_max} (got {})",
                    self.alpha
                )));
            }
            if !(self.b > 0.0) {
                return Err(CoreError::Params("decay regime needs b > 0".into()));
            }
        }
        Ok(())
    }

    /// `nu = (2 - dim*alpha)/2`, the decay exponent of the amplitude ladder.
    pub fn nu(&self) -> f64 {
        (2.0 - self.dim as f64 * self.alpha) / 2.0
    }

    /// `(4 - dim*alpha)/2`, the growth exponent of the rescaled coupling.
    pub fn weight_exponent(&self) -> f64 {
        (4.0 - self.dim as f64 * self.alpha) / 2.0
    }

    /// Time-dependent coupling strength of the rescaled equation,
    /// `(1 - b t)^{-(4 - dim*alpha)/2}`; equals 1 identically when `b = 0`.
    pub fn rescaled_weight(&self, t: f64) -> f64 {
        if self.b == 0.0 {
            1.0
        } else {
            (1.0 - self.b * t).powf(-self.weight_exponent())
        }
    }
}

/// Derivative/weight indices `(k, n, m, J)` steering the seminorm families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexSet {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Top derivative order, `J = 2m + 2 + k + n`.
    pub j: usize,
}

impl IndexSet {
    /// Build an index set, deriving `J = 2m + 2 + k + n`.
    pub fn new(k: usize, n: usize, m: usize) -> Self {
        IndexSet { k, n, m, j: 2 * m + 2 + k + n }
    }

    /// Smallest admissible choices per dimension.
    pub fn defaults(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(IndexSet::new(1, 2, 2)),
            2 => Ok(IndexSet::new(2, 3, 3)),
            3 => Ok(IndexSet::new(2, 4, 4)),
            _ => Err(CoreError::Params(format!("dim must be 1, 2, or 3 (got {dim})"))),
        }
    }
}

/// Check the admissibility constraints tying `(k, n, m, J)` to the dimension
/// and (in theorem mode) to `alpha`. All violations are reported at once.
pub fn validate_indices(idx: &IndexSet, p: &ModelParams, theorem_mode: bool) -> Result<()> {
    let nf = p.dim as f64;
    let mut violations: Vec<String> = Vec::new();
    if !(idx.k as f64 > nf / 2.0) {
        violations.push(format!("k = {} must exceed dim/2 = {}", idx.k, nf / 2.0));
    }
    let n_floor = (nf / 2.0 + 1.0).max(nf * (nf + 1.0) / 4.0);
    if !(idx.n as f64 > n_floor) {
        violations.push(format!(
            "n = {} must exceed max(dim/2 + 1, dim(dim+1)/4) = {}",
            idx.n, n_floor
        ));
    }
    if 2 * idx.m < idx.k + idx.n + 1 {
        violations.push(format!(
            "2m = {} must be at least k + n + 1 = {}",
            2 * idx.m,
            idx.k + idx.n + 1
        ));
    }
    if idx.j != 2 * idx.m + 2 + idx.k + idx.n {
        violations.push(format!(
            "J = {} must equal 2m + 2 + k + n = {}",
            idx.j,
            2 * idx.m + 2 + idx.k + idx.n
        ));
    }
    if theorem_mode && !(idx.n as f64 >= nf / (2.0 * p.alpha)) {
        violations.push(format!(
            "decay regime needs n >= dim/(2 alpha) = {}",
            nf / (2.0 * p.alpha)
        ));
    }
    if idx.j > MAX_DERIVATIVE_ORDER {
        violations.push(format!(
            "J = {} exceeds the supported derivative cap {}",
            idx.j, MAX_DERIVATIVE_ORDER
        ));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CoreError::Params(violations.join("; ")))
    }
}

/// The exponent ladder `sigma_0 <= sigma_1 <= ... <= sigma_J` attached to an
/// index set: each seminorm of order `j` is monitored with the time weight
/// `(1 - b t)^{sigma_j}`.
#[derive(Clone, Debug)]
pub struct SigmaSchedule {
    sigma: Vec<f64>,
    idx: IndexSet,
}

impl SigmaSchedule {
    pub fn get(&self, j: usize) -> f64 {
        self.sigma[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.idx
    }

    /// `sigma_1`, the base exponent of the ladder.
    pub fn base(&self) -> f64 {
        self.sigma[1]
    }

    /// Top exponent `sigma_J`, also available in closed form.
    pub fn top(&self) -> f64 {
        *self.sigma.last().unwrap()
    }
}

/// Build the exponent ladder for the given indices and parameters.
///
/// The ladder is defined piecewise:
/// - `sigma_0 = 0`;
/// - `sigma_1 = 1 / (4 [4J(J - 2m - 1) + 4J + 4/dim + 1] (8m + 1)^{2m})`;
/// - `sigma_j = (8m + 1)^j sigma_1` for `2 <= j <= 2m`;
/// - `sigma_{2m+1} = (2 - dim*alpha)/2 + (4J + 2 alpha + 1) sigma_{2m}`;
/// - `sigma_j = 4 J sigma_{2m} (j - 2m - 1) + sigma_{2m+1}` for `j > 2m + 1`.
pub fn sigma_schedule(idx: &IndexSet, p: &ModelParams) -> Result<SigmaSchedule> {
    validate_indices(idx, p, false)?;
    p.validate(false)?;
    let jf = idx.j as f64;
    let mf = idx.m as f64;
    let nf = p.dim as f64;
    let base_denom = 4.0 * (4.0 * jf * (jf - 2.0 * mf - 1.0) + 4.0 * jf + 4.0 / nf + 1.0)
        * (8.0 * mf + 1.0).powi(2 * idx.m as i32);
    let sigma1 = 1.0 / base_denom;

    let mut sigma = vec![0.0; idx.j + 1];
    sigma[1] = sigma1;
    for j in 2..=2 * idx.m {
        sigma[j] = (8.0 * mf + 1.0).powi(j as i32) * sigma1;
    }
    let sigma_2m = sigma[2 * idx.m];
    sigma[2 * idx.m + 1] =
        (2.0 - nf * p.alpha) / 2.0 + (4.0 * jf + 2.0 * p.alpha + 1.0) * sigma_2m;
    for j in (2 * idx.m + 2)..=idx.j {
        sigma[j] = 4.0 * jf * sigma_2m * (j as f64 - 2.0 * mf - 1.0) + sigma[2 * idx.m + 1];
    }

    for j in 1..=idx.j {
        if sigma[j] < sigma[j - 1] {
            return Err(CoreError::Params(format!(
                "exponent ladder is not monotone at j = {j} ({} < {})",
                sigma[j],
                sigma[j - 1]
            )));
        }
    }
    Ok(SigmaSchedule { sigma, idx: *idx })
}

/// Closed form of the top exponent:
/// `sigma_J = [4J(J - 2m - 1) + 4J + 2 alpha + 1] (8m + 1)^{2m} sigma_1
///           + (2 - dim*alpha)/2`.
pub fn closed_form_sigma_top(idx: &IndexSet, p: &ModelParams) -> Result<f64> {
    validate_indices(idx, p, false)?;
    let jf = idx.j as f64;
    let mf = idx.m as f64;
    let nf = p.dim as f64;
    let base_denom = 4.0 * (4.0 * jf * (jf - 2.0 * mf - 1.0) + 4.0 * jf + 4.0 / nf + 1.0)
        * (8.0 * mf + 1.0).powi(2 * idx.m as i32);
    let sigma1 = 1.0 / base_denom;
    Ok((4.0 * jf * (jf - 2.0 * mf - 1.0) + 4.0 * jf + 2.0 * p.alpha + 1.0)
        * (8.0 * mf + 1.0).powi(2 * idx.m as i32)
        * sigma1
        + (2.0 - nf * p.alpha) / 2.0)
}

/// Extra constants of the a-priori estimates entering the thresholds; all
/// default to 1 and can be overridden when sharper values are available.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for PropagationConstants {
    fn default() -> Self {
        PropagationConstants { c1: 1.0, c2: 1.0, c3: 1.0 }
    }
}

/// The explicit smallness/largeness thresholds delimiting the guaranteed
/// decay regime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdConfig {
    /// Baseline largeness scale `b_0 = (16/dim)(4K)^{4/dim + 2}`.
    pub b0: f64,
    /// Lower bound `alpha_1 < 2/dim` on admissible powers.
    pub alpha1: f64,
    /// Rate threshold `b_1`: the guarantee needs `b >= b_1`.
    pub b1: f64,
    /// Constants the thresholds were computed with.
    pub constants: PropagationConstants,
    /// Whether the supplied `(alpha, b)` sit inside the guaranteed regime.
    pub theorem_regime: bool,
}

/// Evaluate the regime thresholds for the given parameters and indices.
pub fn thresholds(
    p: &ModelParams,
    idx: &IndexSet,
    constants: &PropagationConstants,
) -> Result<ThresholdConfig> {
    p.validate(false)?;
    validate_indices(idx, p, false)?;
    if !(constants.c1 > 0.0 && constants.c2 > 0.0 && constants.c3 > 0.0) {
        return Err(CoreError::Params("propagation constants must be positive".into()));
    }
    let nf = p.dim as f64;
    let jf = idx.j as f64;
    let four_k = 4.0 * p.k_bound;
    let lam_abs = p.lambda.norm();
    let sigma1 = sigma_schedule(idx, p)?.base();

    let b0 = (16.0 / nf) * four_k.powf(4.0 / nf + 2.0);

    // alpha_1 solves 2/alpha_1 - dim = sigma_1 |Re lambda| / (12 C1 C2 (4K)^{4J+1} |lambda|),
    // the margin shrinking as the top-order constants grow. A zero margin
    // (conservative coupling) pins alpha_1 at the critical power 2/dim.
    let eps = if lam_abs == 0.0 {
        0.0
    } else {
        sigma1 * p.lambda.re.abs()
            / (12.0 * constants.c1 * constants.c2 * four_k.powf(4.0 * jf + 1.0) * lam_abs)
    };
    let alpha1 = 2.0 / (nf + eps);

    let b1 = [
        b0,
        8.0 * constants.c3,
        32.0 * four_k.powf(4.0 * jf + 4.0) * lam_abs * constants.c1 * constants.c2 / sigma1,
        2.0f64.powf(4.0 / nf + 3.0) * p.alpha * four_k.powi(2)
            / ((3.0f64).powf(1.0 / nf) - 1.0),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);

    let theorem_regime = p.alpha >= alpha1 && p.b >= b1;
    Ok(ThresholdConfig { b0, alpha1, b1, constants: *constants, theorem_regime })
}
