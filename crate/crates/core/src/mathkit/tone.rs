use super::vec3::Vec3;
use crate::error::{domain_err, Result};

/// `L / (1 + L)` for a single channel.
#[inline]
pub fn tone_map_scalar(l: f64) -> f64 {
    l / (1.0 + l)
}

/// Derivative of [`tone_map_scalar`].
#[inline]
pub fn tone_map_scalar_grad(l: f64) -> f64 {
    let d = 1.0 + l;
    1.0 / (d * d)
}

/// Per-channel `L / (1 + L)`.
pub fn tone_map(l: Vec3) -> Result<Vec3> {
    if !(l.is_finite() && l.x >= 0.0 && l.y >= 0.0 && l.z >= 0.0) {
        return Err(domain_err!("tone_map expects finite non-negative radiance, got {l:?}"));
    }
    Ok(Vec3::new(tone_map_scalar(l.x), tone_map_scalar(l.y), tone_map_scalar(l.z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_values() {
        assert_eq!(tone_map(Vec3::ZERO).unwrap(), Vec3::ZERO);
        assert_eq!(tone_map(Vec3::splat(1.0)).unwrap(), Vec3::splat(0.5));
        assert_eq!(tone_map(Vec3::splat(3.0)).unwrap(), Vec3::splat(0.75));
        assert!(tone_map(Vec3::new(0.0, -1.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn strictly_monotone(a in 0.0f64..1e6, d in 1e-6f64..1e3) {
            prop_assert!(tone_map_scalar(a) < tone_map_scalar(a + d));
            prop_assert!(tone_map_scalar(a + d) < 1.0);
        }
    }
}
