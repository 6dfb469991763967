//! Independent high-accuracy integrator for the scalar amplitude equation
//! `dz/dtau = lambda |z|^alpha z`.
//!
//! The stepper crate evaluates this flow through a closed form; anything that
//! certifies the closed form must not reuse it. This module integrates the
//! ODE numerically instead — classic fourth-order Runge–Kutta with step
//! doubling: every step is taken once at width `h` and once as two halves,
//! the difference estimates the local error, and the Richardson-extrapolated
//! combination (fifth-order locally) is kept. Nothing here touches the
//! closed-form branch.
//!
//! The state is carried in double-double arithmetic (`twofloat`). In plain
//! f64 the accumulated representation roundoff puts a floor of roughly
//! `steps * ulp(|z|)` under the global error — a long, fast rotation
//! (|z0| = 10, tau = 10, Re lambda = 0) needs ~1e5 steps and lands near
//! 1e-9 absolute, too coarse to certify a 1e-10 comparison. With ~1e-31
//! ulps the roundoff floor vanishes and the truncation control alone sets
//! the accuracy.
//!
//! Only part of the crate is trusted, and the trusted subset was measured,
//! not assumed: add, sub, mul, and division *by a plain f64* hold genuine
//! double-double accuracy (reference-free exactness probes land at 0 or
//! ~1e-32). Division by another `TwoFloat` does not — the quotient
//! refinement writes its residual `1 - y*t` as a plain expression where the
//! algorithm requires a fused multiply-add, so the correction term rounds
//! away and the low word of the quotient is left unfilled (measured:
//! `(1/3)*3 - 1 = -5.6e-17`, plain f64 quality). The library `ln` is broken
//! for the same class of reason (~2e-12 relative at ln 10, worse than the
//! f64 `ln`), which would leak into `|z|^alpha` as a systematic per-step
//! phase bias. Consequently this module divides only by f64 values, and the
//! elementary functions it needs — sqrt, exp, ln, real power — are built
//! from scratch on the verified subset and pinned against 60-digit decimal
//! references in the tests.

use num_complex::Complex64;
use twofloat::TwoFloat;

/// ln 2 as a double-double (hi, lo) pair; the residual beyond the pair is
/// ~5.7e-34. Bit patterns pinned so no library call can drift them.
fn dd_ln2() -> TwoFloat {
    TwoFloat::try_from((
        f64::from_bits(0x3FE62E42FEFA39EF),
        f64::from_bits(0x3C7ABC9E3B39803F),
    ))
    .expect("static ln2 pair is a valid double-double")
}

/// Square root by one Newton correction of the f64 seed:
/// `s = s0 + (m - s0^2) / (2 s0)` squares the seed's ~1e-16 relative error
/// down to ~1e-32, at double-double working precision.
fn dd_sqrt(m: TwoFloat) -> TwoFloat {
    let mf = f64::from(m);
    if !(mf > 0.0) {
        return TwoFloat::from(if mf == 0.0 { 0.0 } else { f64::NAN });
    }
    if !mf.is_finite() {
        return m;
    }
    let s0f = mf.sqrt();
    let s0 = TwoFloat::from(s0f);
    s0 + (m - s0 * s0) / (2.0 * s0f)
}

/// exp in double-double: reduce `x = k ln2 + r` with `|r| <= ln2/2`, sum the
/// Taylor series of exp(r) (25 terms: r^26/26! < 1e-38), scale by the exact
/// power of two.
fn dd_exp(x: TwoFloat) -> TwoFloat {
    let xf = f64::from(x);
    if !xf.is_finite() {
        return TwoFloat::from(if xf > 0.0 { f64::INFINITY } else { 0.0 });
    }
    if xf > 709.0 {
        return TwoFloat::from(f64::INFINITY);
    }
    if xf < -708.0 {
        // Underflow region: subnormal scaling would quietly shed the low
        // word anyway; every caller treats this as an exact zero.
        return TwoFloat::from(0.0);
    }
    let k = (xf / std::f64::consts::LN_2).round();
    let r = x - dd_ln2() * TwoFloat::from(k);
    let one = TwoFloat::from(1.0);
    let mut s = one;
    for n in (1..=25).rev() {
        s = s * r / (n as f64) + one;
    }
    s * TwoFloat::from(2.0f64.powi(k as i32))
}

/// ln in double-double: one Newton step for `exp(l) = m` from the f64 seed,
/// `l = l0 + (m e^{-l0} - 1)`, squaring the seed error to ~1e-32.
fn dd_ln(m: TwoFloat) -> TwoFloat {
    let mf = f64::from(m);
    assert!(mf > 0.0, "dd_ln needs a positive argument (got {mf})");
    let l0 = mf.ln();
    if !(1e-290..=1e290).contains(&mf) {
        // Extreme magnitudes: exp(-l0) would leave the dd-exact range. The
        // f64 seed's ~1e-16 relative accuracy is already far below any
        // tolerance used at such scales.
        return TwoFloat::from(l0);
    }
    let l0 = TwoFloat::from(l0);
    l0 + (m * dd_exp(-l0) - TwoFloat::from(1.0))
}

/// Real power `m^alpha` for `m > 0` via exp(alpha ln m), all double-double.
fn dd_pow(m: TwoFloat, alpha: f64) -> TwoFloat {
    dd_exp(dd_ln(m) * TwoFloat::from(alpha))
}

/// Complex number with double-double components. Only what the RK4 loop
/// needs: add, subtract, right-scale by a real, complex product, modulus.
#[derive(Clone, Copy)]
struct Dd {
    re: TwoFloat,
    im: TwoFloat,
}

impl Dd {
    fn from_c64(z: Complex64) -> Self {
        Dd {
            re: TwoFloat::from(z.re),
            im: TwoFloat::from(z.im),
        }
    }

    fn to_c64(self) -> Complex64 {
        Complex64::new(f64::from(self.re), f64::from(self.im))
    }

    fn add(self, o: Dd) -> Dd {
        Dd {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }

    fn sub(self, o: Dd) -> Dd {
        Dd {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }

    fn scale(self, s: TwoFloat) -> Dd {
        Dd {
            re: self.re * s,
            im: self.im * s,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        Dd {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    fn norm(self) -> TwoFloat {
        dd_sqrt(self.re * self.re + self.im * self.im)
    }

    fn is_finite(self) -> bool {
        f64::from(self.re).is_finite() && f64::from(self.im).is_finite()
    }
}

fn rhs(z: Dd, lambda: Dd, alpha: f64) -> Dd {
    let m = z.norm();
    // |z|^alpha via exp(alpha ln |z|); ln(0) is poison, but the flow fixes
    // the origin exactly, so the zero branch is the correct limit.
    if !(f64::from(m) > 0.0) {
        return Dd::from_c64(Complex64::new(0.0, 0.0));
    }
    lambda.mul(z).scale(dd_pow(m, alpha))
}

fn rk4_step(z: Dd, h: TwoFloat, lambda: Dd, alpha: f64) -> Dd {
    let half = h * TwoFloat::from(0.5);
    let sixth = h / 6.0;
    let two = TwoFloat::from(2.0);
    let k1 = rhs(z, lambda, alpha);
    let k2 = rhs(z.add(k1.scale(half)), lambda, alpha);
    let k3 = rhs(z.add(k2.scale(half)), lambda, alpha);
    let k4 = rhs(z.add(k3.scale(h)), lambda, alpha);
    z.add(
        k1.add(k2.scale(two))
            .add(k3.scale(two))
            .add(k4)
            .scale(sixth),
    )
}

/// Integrate `dz/dtau = lambda |z|^alpha z` from `z0` through time
/// `tau >= 0` with local error control at `tol` (per unit time, relative to
/// `1 + |z|`).
///
/// The acceptance threshold keeps a small absolute floor: the step-doubling
/// estimate `|big - small|` bottoms out at arithmetic noise, and an
/// unfloored `allowed ~ tol * h` would chase it downward forever (each
/// rejection shrinks `h`, which shrinks `allowed` faster than the noise
/// falls). In double-double the noise sits near 1e-31 ulps, so the floor is
/// far below every tolerance this oracle is asked for and the truncation
/// control is what actually binds.
///
/// Blow-up (possible only for `Re lambda > 0`) surfaces as non-finite
/// output, never as a panic or a silently clamped value.
pub fn scalar_flow_rk4(
    z0: Complex64,
    tau: f64,
    lambda: Complex64,
    alpha: f64,
    tol: f64,
) -> Complex64 {
    assert!(tau >= 0.0 && tau.is_finite(), "tau must be finite and >= 0 (got {tau})");
    assert!(tol > 0.0, "tolerance must be positive (got {tol})");
    if tau == 0.0 || z0.norm() == 0.0 {
        return z0;
    }
    let lam = Dd::from_c64(lambda);
    // Elapsed time accumulates in double-double as well: over ~1e5 steps a
    // plain `t += h` drifts by steps * ulp(t), which a fast rotation
    // (d phase/dt ~ 16) turns into an endpoint error above the certification
    // budget. The f64 shadow `t` only drives the step-size control.
    let mut t_dd = TwoFloat::from(0.0);
    let mut t = 0.0f64;
    let mut z = Dd::from_c64(z0);
    let mut h = tau / 16.0;
    let h_floor = tau * 1e-14;
    // Stop once the remaining interval is within roundoff of the endpoint:
    // a sliver below h_floor can be smaller than one ulp of t, in which case
    // `t += h` would no longer advance and the loop would spin. Dropping it
    // changes the result by O(|rhs| * h_floor), far below any tolerance this
    // oracle is asked for.
    let mut guard = 0u64;
    while tau - t > h_floor {
        if !z.is_finite() {
            return z.to_c64();
        }
        h = h.min(tau - t);
        loop {
            guard += 1;
            if guard > 10_000_000 {
                // Refuse to spin: surface the breakdown as NaN so any
                // comparison against this oracle fails loudly.
                return Complex64::new(f64::NAN, f64::NAN);
            }
            let hd = TwoFloat::from(h);
            let big = rk4_step(z, hd, lam, alpha);
            let half = rk4_step(z, hd * TwoFloat::from(0.5), lam, alpha);
            let small = rk4_step(half, hd * TwoFloat::from(0.5), lam, alpha);
            let err = f64::from(big.sub(small).norm());
            if !(big.is_finite() && small.is_finite() && err.is_finite()) {
                // A wildly unstable trial (large h on a stiff cell) can
                // overflow both estimates to matching infinities, making
                // err NaN; NaN fed into the shrink factor would stick to h
                // (clamp propagates it) and spin this loop forever. Treat
                // any non-finite trial as an unconditional hard rejection.
                // The right-hand side is finite at finite states, so trials
                // become finite again long before h reaches h_floor.
                h *= 0.1;
                continue;
            }
            let zn = f64::from(z.norm());
            let noise = 1e-28 * (1.0 + zn);
            let allowed = (tol * (h / tau) * (1.0 + zn)).max(noise);
            if err <= allowed || h <= h_floor {
                // Keep the Richardson-extrapolated combination,
                // locally fifth order.
                z = small.add(small.sub(big).scale(TwoFloat::from(1.0 / 15.0)));
                t_dd = t_dd + hd;
                t = f64::from(t_dd);
                let grow = if err > 0.0 {
                    (0.9 * (allowed / err).powf(0.2)).clamp(1.0, 2.0)
                } else {
                    2.0
                };
                h *= grow;
                break;
            }
            h *= (0.9 * (allowed / err).powf(0.2)).clamp(0.1, 0.9);
        }
    }
    z.to_c64()
}
