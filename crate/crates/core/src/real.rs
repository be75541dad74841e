//! Double-double reals and a few scalar helpers.

use num_traits::Float;
pub use twofloat::TwoFloat;

/// Extended-precision real (about 31 significant decimal digits).
pub type Real = TwoFloat;

pub fn real(x: f64) -> Real {
    Real::from(x)
}

pub fn to_f64(x: Real) -> f64 {
    x.hi() + x.lo()
}

/// Quotient accurate to double-double precision.
///
/// `TwoFloat`'s own `/` between two double-doubles forms the reciprocal
/// residual without a fused multiply-add and is only f64-accurate; one
/// correction step with an exact product restores the lost digits.
pub fn div(a: Real, b: Real) -> Real {
    let q = a / b;
    let r = a - q * b;
    q + r / b
}

/// Nearest integer with exact half-integers rounded toward zero.
pub fn round_half_toward_zero(x: f64) -> f64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 {
        x.trunc()
    } else {
        r
    }
}

/// Same rounding rule on double-double input.
pub fn round_half_toward_zero_real(x: Real) -> Real {
    let t = x.trunc();
    let frac = (x - t).abs();
    if frac == real(0.5) {
        t
    } else {
        x.round()
    }
}

/// The real root of x^3 - x - 1 (the plastic number), to double-double accuracy.
pub fn plastic_number() -> Real {
    let mut x = real(1.324_717_957_244_746);
    for _ in 0..4 {
        let fx = x * x * x - x - real(1.0);
        let dfx = real(3.0) * x * x - real(1.0);
        x -= div(fx, dfx);
    }
    x
}

pub fn sqrt_real(x: f64) -> Real {
    Float::sqrt(real(x))
}
