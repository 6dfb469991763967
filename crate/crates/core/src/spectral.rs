//! Pseudo-spectral operators on periodic grids: Fourier analysis/synthesis,
//! multiplier operators (Laplacian, mixed derivatives), the free Schrödinger
//! propagator, and Fourier-series resampling onto dilated grids.
//!
//! Convention: a field `f` on `[-L, L)^dim` is expanded as
//! `f(x) = sum_k c_k e^{i xi_k . x}` with `xi_k = pi k / L` per axis and
//! `c_k = M^{-dim} sum_j f(x_j) e^{-i xi_k . x_j}`. With the grid's discrete
//! `L^2` norm this gives the Parseval identity
//! `||f||_2^2 = (2L)^dim sum_k |c_k|^2`.

use std::sync::{Mutex, OnceLock};

use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::grid::{C64, Field, Grid};
use crate::params::MAX_DERIVATIVE_ORDER;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Run length-`M` FFTs along one axis of the row-major tensor `data`.
fn fft_axis(data: &mut [C64], grid: &Grid, axis: usize, forward: bool) {
    let m = grid.points();
    let dim = grid.dim();
    let fft = {
        let mut pl = planner().lock().unwrap();
        if forward {
            pl.plan_fft_forward(m)
        } else {
            pl.plan_fft_inverse(m)
        }
    };
    if axis == dim - 1 {
        for chunk in data.chunks_exact_mut(m) {
            fft.process(chunk);
        }
        return;
    }
    let stride = m.pow((dim - 1 - axis) as u32);
    let outer = data.len() / (m * stride);
    let mut line = vec![C64::new(0.0, 0.0); m];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * m * stride + inner;
            for t in 0..m {
                line[t] = data[base + t * stride];
            }
            fft.process(&mut line);
            for t in 0..m {
                data[base + t * stride] = line[t];
            }
        }
    }
}

/// `(-1)^{k_0 + ... + k_{dim-1}}` for a flat spectral index: the phase that
/// re-anchors the transform to a box starting at `-L` instead of `0`.
fn parity_sign(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.axis_indices(flat);
    let s: usize = idx[..grid.dim()].iter().sum();
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fourier coefficients of a field, in FFT bin layout per axis.
pub fn to_spectrum(f: &Field) -> Vec<C64> {
    let grid = f.grid();
    let mut data = f.values().to_vec();
    for axis in 0..grid.dim() {
        fft_axis(&mut data, grid, axis, true);
    }
    let scale = 1.0 / grid.len() as f64;
    for (i, z) in data.iter_mut().enumerate() {
        *z *= parity_sign(grid, i) * scale;
    }
    data
}

/// Synthesize a field from Fourier coefficients in FFT bin layout.
pub fn from_spectrum(grid: &Grid, coeffs: &[C64], time: f64) -> Result<Field> {
    if coeffs.len() != grid.len() {
        return Err(CoreError::Grid(format!(
            "coefficient count {} does not match grid size {}",
            coeffs.len(),
            grid.len()
        )));
    }
    let mut data: Vec<C64> =
        coeffs.iter().enumerate().map(|(i, z)| z * parity_sign(grid, i)).collect();
    for axis in 0..grid.dim() {
        fft_axis(&mut data, grid, axis, false);
    }
    Field::new(grid.clone(), data, time)
}

/// Apply a spectral multiplier given per-bin, axis-wise wavenumbers.
fn apply_symbol(f: &Field, mut symbol: impl FnMut(&[f64]) -> C64) -> Field {
    let grid = f.grid();
    let xi = grid.wavenumbers();
    let mut coeffs = to_spectrum(f);
    let dim = grid.dim();
    let mut k = [0.0f64; 3];
    for (flat, c) in coeffs.iter_mut().enumerate() {
        let idx = grid.axis_indices(flat);
        for a in 0..dim {
            k[a] = xi[idx[a]];
        }
        *c *= symbol(&k[..dim]);
    }
    from_spectrum(grid, &coeffs, f.time()).expect("coefficient length is preserved")
}

/// Spectral Laplacian: multiplier `-|xi|^2`.
pub fn laplacian(f: &Field) -> Field {
    apply_symbol(f, |k| {
        let q: f64 = k.iter().map(|x| x * x).sum();
        C64::new(-q, 0.0)
    })
}

/// Mixed spatial derivative `D^beta f` with symbol `prod_a (i xi_a)^{beta_a}`.
///
/// The Nyquist bin is zeroed along any axis with odd `beta_a`: that bin only
/// carries a cosine at the grid scale, whose odd derivatives have no faithful
/// grid representation.
pub fn derivative(f: &Field, beta: &[usize]) -> Result<Field> {
    let grid = f.grid();
    if beta.len() != grid.dim() {
        return Err(CoreError::Unsupported(format!(
            "derivative multi-index has {} entries for a {}-d grid",
            beta.len(),
            grid.dim()
        )));
    }
    let order: usize = beta.iter().sum();
    if order > MAX_DERIVATIVE_ORDER {
        return Err(CoreError::DerivativeOrder { order, cap: MAX_DERIVATIVE_ORDER });
    }
    let m = grid.points();
    let nyquist_bin = m / 2;
    let xi = grid.wavenumbers();
    let mut coeffs = to_spectrum(f);
    let i_pow = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
    for (flat, c) in coeffs.iter_mut().enumerate() {
        let idx = grid.axis_indices(flat);
        let mut factor = C64::new(1.0, 0.0);
        for a in 0..grid.dim() {
            let b = beta[a];
            if b == 0 {
                continue;
            }
            if idx[a] == nyquist_bin && b % 2 == 1 {
                factor = C64::new(0.0, 0.0);
                break;
            }
            factor *= i_pow[b % 4] * xi[idx[a]].powi(b as i32);
        }
        *c *= factor;
    }
    from_spectrum(grid, &coeffs, f.time())
}

/// Exact free flow `e^{i dt Lap}`: multiplier `e^{-i |xi|^2 dt}`. The result
/// carries the advanced time stamp.
pub fn free_propagate(f: &Field, dt: f64) -> Field {
    let out = apply_symbol(f, |k| {
        let q: f64 = k.iter().map(|x| x * x).sum();
        C64::from_polar(1.0, -q * dt)
    });
    out.with_time(f.time() + dt)
}

/// Evaluate the Fourier series of `f` at the dilated nodes `s * y`,
/// `y` ranging over `target`.
///
/// The dilated nodes must stay inside the reliable region `|s y| <= 0.9 L`
/// of the source box: closer to the edge the periodic images contaminate
/// the values of a decaying field.
pub fn resample(f: &Field, s: f64, target: &Grid) -> Result<Field> {
    let grid = f.grid();
    if target.dim() != grid.dim() {
        return Err(CoreError::Unsupported(format!(
            "resample target dim {} does not match source dim {}",
            target.dim(),
            grid.dim()
        )));
    }
    if !s.is_finite() || s == 0.0 {
        return Err(CoreError::Unsupported(format!("resample scale must be finite nonzero (got {s})")));
    }
    let reach = s.abs() * target.half_width();
    let limit = 0.9 * grid.half_width();
    if reach > limit * (1.0 + 1e-12) {
        return Err(CoreError::ResampleRange { reach, limit });
    }

    let coeffs = to_spectrum(f);
    let xi = grid.wavenumbers();
    let ys = target.axis_coords();
    let mf = grid.points();
    let mt = target.points();
    // Evaluation matrix shared by all axes: e[y * mf + k] = exp(i xi_k s y).
    let mut eval = vec![C64::new(0.0, 0.0); mt * mf];
    for (yi, &y) in ys.iter().enumerate() {
        for (ki, &k) in xi.iter().enumerate() {
            eval[yi * mf + ki] = C64::from_polar(1.0, k * s * y);
        }
    }

    let dim = grid.dim();
    let mut data = coeffs;
    let mut shape = vec![mf; dim];
    for axis in 0..dim {
        data = contract_axis(&data, &shape, axis, &eval, mt);
        shape[axis] = mt;
    }
    Field::new(target.clone(), data, f.time())
}

/// Replace axis `axis` (length `shape[axis]`) by `rows` output rows through
/// the matrix `e[row * shape[axis] + k]`.
fn contract_axis(
    data: &[C64],
    shape: &[usize],
    axis: usize,
    e: &[C64],
    rows: usize,
) -> Vec<C64> {
    let m = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); outer * rows * stride];
    for o in 0..outer {
        for y in 0..rows {
            let erow = &e[y * m..(y + 1) * m];
            for inner in 0..stride {
                let base = o * m * stride + inner;
                let mut acc = C64::new(0.0, 0.0);
                for (k, ek) in erow.iter().enumerate() {
                    acc += data[base + k * stride] * ek;
                }
                out[(o * rows + y) * stride + inner] = acc;
            }
        }
    }
    out
}

/// Ratio of the largest coefficient modulus in the outer eighth of the
/// spectrum (per axis, `|bin| >= 7M/16`) to the largest overall. Values
/// near rounding noise certify band-limited data.
pub fn spectral_tail_ratio(f: &Field) -> f64 {
    let grid = f.grid();
    let m = grid.points() as i64;
    let cutoff = 7 * m / 16;
    let coeffs = to_spectrum(f);
    let mut max_all = 0.0f64;
    let mut max_tail = 0.0f64;
    for (flat, c) in coeffs.iter().enumerate() {
        let idx = grid.axis_indices(flat);
        let a = c.norm();
        max_all = max_all.max(a);
        let in_tail = (0..grid.dim()).any(|ax| {
            let bin = idx[ax] as i64;
            let signed = if bin < m / 2 { bin } else { bin - m };
            signed.abs() >= cutoff
        });
        if in_tail {
            max_tail = max_tail.max(a);
        }
    }
    if max_all == 0.0 {
        0.0
    } else {
        max_tail / max_all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1(l: f64, m: usize) -> Grid {
        Grid::new(1, l, m).unwrap()
    }

    fn max_err(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn plane_wave_lands_in_a_single_bin() {
        // f = e^{i xi_3 x} must produce c_3 = 1 and nothing else; this pins
        // both the normalization and the -L anchoring phase.
        let g = grid1(10.0, 64);
        let xi3 = 3.0 * std::f64::consts::PI / 10.0;
        let f = Field::from_fn(g.clone(), 0.0, |x| C64::from_polar(1.0, xi3 * x[0]));
        let c = to_spectrum(&f);
        assert_relative_eq!(c[3].re, 1.0, max_relative = 1e-12);
        assert!(c[3].im.abs() < 1e-12);
        for (k, z) in c.iter().enumerate() {
            if k != 3 {
                assert!(z.norm() < 1e-12, "leak at bin {k}: {z}");
            }
        }
    }

    #[test]
    fn analysis_synthesis_round_trip() {
        let g = Grid::new(2, 8.0, 32).unwrap();
        let f = Field::from_fn(g.clone(), 0.7, |x| {
            C64::new((x[0] * 0.3).cos() * (-x[1] * x[1] / 3.0).exp(), (x[0] + x[1]).sin())
        });
        let back = from_spectrum(&g, &to_spectrum(&f), f.time()).unwrap();
        assert!(max_err(&f, &back) < 1e-12);
        assert_eq!(back.time(), 0.7);
    }

    #[test]
    fn parseval_identity_holds() {
        let g = grid1(20.0, 128);
        let f = Field::from_fn(g.clone(), 0.0, |x| {
            C64::new((-x[0] * x[0] / 2.0).exp(), 0.2 * (0.9 * x[0]).sin())
        });
        let c = to_spectrum(&f);
        let spec_l2 = ((2.0 * g.half_width()).powi(g.dim() as i32)
            * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sqrt();
        assert_relative_eq!(spec_l2, f.l2_norm(), max_relative = 1e-12);
    }

    #[test]
    fn laplacian_is_exact_on_plane_waves() {
        let g = grid1(10.0, 64);
        let xi5 = 5.0 * std::f64::consts::PI / 10.0;
        let f = Field::from_fn(g, 0.0, |x| C64::from_polar(1.0, xi5 * x[0]));
        let lf = laplacian(&f);
        for (a, b) in lf.values().iter().zip(f.values()) {
            assert!((a + xi5 * xi5 * b).norm() < 1e-11);
        }
    }

    #[test]
    fn laplacian_of_a_gaussian_matches_the_analytic_form() {
        let g = grid1(20.0, 256);
        let f = Field::from_fn(g.clone(), 0.0, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let lf = laplacian(&f);
        let exact = Field::from_fn(g, 0.0, |x| {
            C64::new((x[0] * x[0] - 1.0) * (-x[0] * x[0] / 2.0).exp(), 0.0)
        });
        assert!(max_err(&lf, &exact) < 1e-10);
    }

    #[test]
    fn third_derivative_of_a_gaussian() {
        // d^3/dx^3 e^{-x^2/2} = (3x - x^3) e^{-x^2/2}.
        let g = grid1(20.0, 256);
        let f = Field::from_fn(g.clone(), 0.0, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let d3 = derivative(&f, &[3]).unwrap();
        let exact = Field::from_fn(g, 0.0, |x| {
            C64::new((3.0 * x[0] - x[0].powi(3)) * (-x[0] * x[0] / 2.0).exp(), 0.0)
        });
        assert!(max_err(&d3, &exact) < 1e-9, "err = {}", max_err(&d3, &exact));
    }

    #[test]
    fn derivative_agrees_with_finite_differences() {
        let g = grid1(15.0, 256);
        let f = Field::from_fn(g.clone(), 0.0, |x| {
            C64::new((-x[0] * x[0] / 4.0).exp() * (1.3 * x[0]).cos(), 0.0)
        });
        let d1 = derivative(&f, &[1]).unwrap();
        // Centered difference on the periodic grid.
        let h = g.spacing();
        let m = g.points();
        let v = f.values();
        let mut worst = 0.0f64;
        for i in 0..m {
            let fd = (v[(i + 1) % m] - v[(i + m - 1) % m]) / (2.0 * h);
            worst = worst.max((d1.values()[i] - fd).norm());
        }
        // Second-order FD error ~ h^2 |f'''| ~ 1e-2; the two must agree to that.
        assert!(worst < 2e-2, "worst = {worst}");
        // And the spectral answer must beat FD against the analytic derivative.
        let exact = Field::from_fn(g, 0.0, |x| {
            let e = (-x[0] * x[0] / 4.0).exp();
            C64::new(e * (-x[0] / 2.0 * (1.3 * x[0]).cos() - 1.3 * (1.3 * x[0]).sin()), 0.0)
        });
        assert!(max_err(&d1, &exact) < 1e-10);
    }

    #[test]
    fn mixed_derivative_in_2d() {
        let g = Grid::new(2, 10.0, 32).unwrap();
        let s = std::f64::consts::PI / 10.0;
        let (x1, x2) = (2.0 * s, 5.0 * s);
        let f = Field::from_fn(g, 0.0, |x| C64::from_polar(1.0, x1 * x[0] + x2 * x[1]));
        let d = derivative(&f, &[1, 2]).unwrap();
        // Symbol: (i x1)(i x2)^2 = -i x1 x2^2... times i^3 overall: i^3 x1 x2^2.
        let factor = C64::new(0.0, 1.0).powu(3) * x1 * x2 * x2;
        for (a, b) in d.values().iter().zip(f.values()) {
            assert!((a - factor * b).norm() < 1e-10);
        }
    }

    #[test]
    fn odd_derivative_kills_the_nyquist_mode() {
        let g = grid1(10.0, 32);
        // cos at the Nyquist frequency alternates sign node to node.
        let f = Field::from_fn(g.clone(), 0.0, |x| {
            let j = ((x[0] + 10.0) / g.spacing()).round() as i64;
            C64::new(if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        });
        let d1 = derivative(&f, &[1]).unwrap();
        assert!(d1.sup_norm() < 1e-12);
        // Even orders keep it: the second derivative is -xi_N^2 f.
        let d2 = derivative(&f, &[2]).unwrap();
        let xin = 16.0 * std::f64::consts::PI / 10.0;
        assert!(max_err(&d2, &Field::from_fn(g, 0.0, |x| {
            let j = ((x[0] + 10.0) / 0.625).round() as i64;
            C64::new(-xin * xin * if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        })) < 1e-9);
    }

    #[test]
    fn derivative_rejects_bad_requests() {
        let g = grid1(10.0, 32);
        let f = Field::zeros(g);
        assert!(matches!(
            derivative(&f, &[17]),
            Err(CoreError::DerivativeOrder { order: 17, cap: 16 })
        ));
        assert!(derivative(&f, &[1, 1]).is_err());
    }

    #[test]
    fn free_flow_phases_a_plane_wave() {
        let g = grid1(10.0, 64);
        let xi = 4.0 * std::f64::consts::PI / 10.0;
        let f = Field::from_fn(g.clone(), 0.0, |x| C64::from_polar(1.0, xi * x[0]));
        let dt = 0.37;
        let out = free_propagate(&f, dt);
        let expect = Field::from_fn(g, 0.0, |x| C64::from_polar(1.0, xi * x[0] - xi * xi * dt));
        assert!(max_err(&out, &expect) < 1e-12);
        assert_relative_eq!(out.time(), dt);
    }

    #[test]
    fn free_flow_is_unitary_and_composes() {
        let g = grid1(15.0, 128);
        let f = Field::from_fn(g, 0.0, |x| {
            C64::new((-x[0] * x[0] / 3.0).exp(), 0.3 * (-x[0] * x[0] / 5.0).exp())
        });
        let n0 = f.l2_norm();
        let one = free_propagate(&f, 0.8);
        assert_relative_eq!(one.l2_norm(), n0, max_relative = 1e-13);
        let two_halves = free_propagate(&free_propagate(&f, 0.4), 0.4);
        assert!(max_err(&one, &two_halves) < 1e-12);
        // Backward flow inverts.
        let back = free_propagate(&one, -0.8);
        assert!(max_err(&back, &f) < 1e-12);
    }

    #[test]
    fn free_flow_matches_the_spreading_gaussian() {
        // e^{i t Lap} e^{-x^2/2} = (1 + 2 i t)^{-1/2} e^{-x^2 / (2 (1 + 2 i t))}.
        let g = grid1(20.0, 256);
        let f = Field::from_fn(g.clone(), 0.0, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let t = 0.3;
        let out = free_propagate(&f, t);
        let a = C64::new(1.0, 2.0 * t);
        let exact = Field::from_fn(g, 0.0, |x| {
            a.powf(-0.5) * (-C64::new(x[0] * x[0], 0.0) / (2.0 * a)).exp()
        });
        assert!(max_err(&out, &exact) < 1e-10, "err = {}", max_err(&out, &exact));
    }

    #[test]
    fn resample_evaluates_the_series_exactly_on_band_limited_data() {
        let g = grid1(10.0, 64);
        let s1 = 2.0 * std::f64::consts::PI / 10.0;
        let s2 = 5.0 * std::f64::consts::PI / 10.0;
        let f = Field::from_fn(g.clone(), 0.0, |x| {
            C64::from_polar(1.0, s1 * x[0]) + C64::new(0.5 * (s2 * x[0]).cos(), 0.0)
        });
        let target = Grid::new(1, 10.0, 128).unwrap();
        let s = 0.5;
        let out = resample(&f, s, &target).unwrap();
        let exact = Field::from_fn(target, 0.0, |y| {
            C64::from_polar(1.0, s1 * s * y[0]) + C64::new(0.5 * (s2 * s * y[0]).cos(), 0.0)
        });
        assert!(max_err(&out, &exact) < 1e-12);
    }

    #[test]
    fn resample_works_axis_by_axis_in_2d() {
        let g = Grid::new(2, 10.0, 32).unwrap();
        let a = 3.0 * std::f64::consts::PI / 10.0;
        let b = 2.0 * std::f64::consts::PI / 10.0;
        let f = Field::from_fn(g, 0.0, |x| C64::from_polar(1.0, a * x[0] - b * x[1]));
        let target = Grid::new(2, 10.0, 16).unwrap();
        let s = 0.75;
        let out = resample(&f, s, &target).unwrap();
        let exact =
            Field::from_fn(target, 0.0, |y| C64::from_polar(1.0, s * (a * y[0] - b * y[1])));
        assert!(max_err(&out, &exact) < 1e-11);
    }

    #[test]
    fn resample_rejects_reaching_past_the_reliable_region() {
        let g = grid1(10.0, 32);
        let f = Field::zeros(g.clone());
        assert!(matches!(resample(&f, 1.0, &g), Err(CoreError::ResampleRange { .. })));
        assert!(resample(&f, 0.9, &g).is_ok());
        let small = Grid::new(1, 4.0, 32).unwrap();
        assert!(resample(&f, 2.0, &small).is_ok());
        assert!(matches!(resample(&f, 2.3, &small), Err(CoreError::ResampleRange { .. })));
    }

    #[test]
    fn tail_ratio_flags_marginal_resolution() {
        let g = grid1(10.0, 64);
        let smooth = Field::from_fn(g.clone(), 0.0, |x| {
            C64::new((-x[0] * x[0] / 2.0).exp(), 0.0)
        });
        assert!(spectral_tail_ratio(&smooth) < 1e-12);
        let spiky = Field::from_fn(g, 0.0, |x| {
            let xin = 30.0 * std::f64::consts::PI / 10.0;
            C64::new((-x[0] * x[0] / 2.0).exp() + 0.1 * (xin * x[0]).cos(), 0.0)
        });
        assert!(spectral_tail_ratio(&spiky) > 1e-3);
    }
}
