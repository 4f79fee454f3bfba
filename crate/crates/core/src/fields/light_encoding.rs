use crate::error::{domain_err, Result};
use crate::light::LightCondition;
use crate::mathkit::encoding::{encoded_len, positional_encode_into};
use crate::mathkit::Vec3;

/// Intensity that maps to a normalized value of 1.
pub const INTENSITY_REF: f64 = 900.0;

/// Conditioning vector of the SH head: one-hot environment flag, encoded
/// light position and normalized intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct LightConditionEncoding {
    /// `(1, 0)` without environment light, `(0, 1)` with it.
    pub one_hot: [f64; 2],
    pub position: Vec<f64>,
    pub intensity: f64,
}

impl LightConditionEncoding {
    pub fn len(light_bands: usize) -> usize {
        2 + encoded_len(3, light_bands) + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.one_hot.to_vec();
        v.extend_from_slice(&self.position);
        v.push(self.intensity);
        v
    }
}

/// Encodes `light` with its position mapped to `(p - centre) / span`. The
/// span should be at least twice the largest light distance so that the
/// lowest frequency band stays injective.
pub fn encode_light_condition(
    light: &LightCondition,
    centre: Vec3,
    span: f64,
    light_bands: usize,
) -> Result<LightConditionEncoding> {
    if !(light.intensity >= 0.0) {
        return Err(domain_err!("light intensity {} must be >= 0", light.intensity));
    }
    let q = light.position - centre;
    let n = [q.x / span, q.y / span, q.z / span];
    let mut position = vec![0.0; encoded_len(3, light_bands)];
    positional_encode_into(&n, light_bands, &mut position);
    Ok(LightConditionEncoding {
        one_hot: if light.env { [0.0, 1.0] } else { [1.0, 0.0] },
        position,
        intensity: light.intensity / INTENSITY_REF,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stated_examples() {
        let unit = 12.0;
        let e = encode_light_condition(&LightCondition::point(Vec3::ZERO, 900.0), Vec3::ZERO, unit, 2).unwrap();
        assert_eq!(e.one_hot, [1.0, 0.0]);
        assert_eq!(e.intensity, 1.0);
        for pair in e.position.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
        assert_eq!(e.to_vec().len(), LightConditionEncoding::len(2));
        let env = LightCondition { env: true, ..LightCondition::point(Vec3::ONE, 50.0) };
        assert_eq!(encode_light_condition(&env, Vec3::ZERO, unit, 2).unwrap().one_hot, [0.0, 1.0]);
        assert!(encode_light_condition(&LightCondition::point(Vec3::ZERO, -1.0), Vec3::ZERO, unit, 2).is_err());
    }
}
