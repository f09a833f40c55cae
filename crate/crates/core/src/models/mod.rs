//! Builders for the two reference models: a 1-D system that changes type in space and time,
//! and a 1-D Kelvin-Voigt solid with a purely elastic subregion.

pub mod kelvin_voigt;
pub mod mixed_type;

use crate::scalar::Real;

/// Ramp `φ`: 0 for `t ≤ 0`, `t` on `]0, 1]`, 1 afterwards.
pub fn phi<T: Real>(t: T) -> T {
    if t <= T::zero() {
        T::zero()
    } else if t <= T::one() {
        t
    } else {
        T::one()
    }
}

/// `φ'`: 1 on the open interval `]0, 1[`, 0 elsewhere (including the kinks).
pub fn phi_prime<T: Real>(t: T) -> T {
    if t > T::zero() && t < T::one() {
        T::one()
    } else {
        T::zero()
    }
}
