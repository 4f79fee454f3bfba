//! Real spherical harmonics.
//!
//! `Y_l^m` uses `sqrt(2) K cos(m phi) P_l^m` for `m > 0`, `K P_l^0` for
//! `m = 0` and `sqrt(2) K sin(-m phi) P_l^{-m}` for `m < 0`, with the
//! associated Legendre functions carrying the Condon–Shortley phase. The flat
//! index of `(l, m)` is `l (l + 1) + m`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::vec3::{Direction, Vec3};
use crate::error::{domain_err, Error, Result};

/// Largest supported band.
pub const MAX_BAND: usize = 9;

/// Number of basis functions up to and including band `l_max`.
pub const fn sh_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Flat index of `(l, m)`.
pub const fn sh_index(l: usize, m: i64) -> usize {
    ((l * (l + 1)) as i64 + m) as usize
}

/// Inverse of [`sh_index`].
pub fn sh_lm(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt().floor() as usize;
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    (l, index as i64 - (l * (l + 1)) as i64)
}

fn check_band(l_max: usize) -> Result<()> {
    if l_max > MAX_BAND {
        return Err(domain_err!("SH band {l_max} exceeds {MAX_BAND}"));
    }
    Ok(())
}

/// `K_l^m` normalization factor.
fn norm_factor(l: usize, m: usize) -> f64 {
    // (l - m)! / (l + m)! accumulated as a product to stay in range
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Writes `Y_l^m(w)` for all bands up to `l_max` into `out`.
pub fn sh_basis_into(l_max: usize, w: Vec3, out: &mut [f64]) {
    debug_assert_eq!(out.len(), sh_count(l_max));
    let x = w.z.clamp(-1.0, 1.0);
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let phi = w.y.atan2(w.x);

    // P_l^m table, m <= l
    let mut p = [[0.0f64; MAX_BAND + 1]; MAX_BAND + 1];
    let mut pmm = 1.0;
    for m in 0..=l_max {
        if m > 0 {
            pmm *= -((2 * m - 1) as f64) * somx2;
        }
        p[m][m] = pmm;
        if m < l_max {
            p[m + 1][m] = x * (2 * m + 1) as f64 * pmm;
        }
        for l in (m + 2)..=l_max {
            p[l][m] = (x * (2 * l - 1) as f64 * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=l_max {
        out[sh_index(l, 0)] = norm_factor(l, 0) * p[l][0];
        for m in 1..=l {
            let k = sqrt2 * norm_factor(l, m) * p[l][m];
            let (s, c) = (m as f64 * phi).sin_cos();
            out[sh_index(l, m as i64)] = k * c;
            out[sh_index(l, -(m as i64))] = k * s;
        }
    }
}

/// Real SH basis values up to band `l_max` at `w`.
pub fn sh_basis(l_max: usize, w: Direction) -> Result<Vec<f64>> {
    check_band(l_max)?;
    let mut out = vec![0.0; sh_count(l_max)];
    sh_basis_into(l_max, w.vec(), &mut out);
    Ok(out)
}

/// RGB spherical-harmonic expansion up to `l_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShCoefficients {
    l_max: usize,
    coeffs: Vec<[f64; 3]>,
}

impl ShCoefficients {
    pub fn zeros(l_max: usize) -> Result<Self> {
        check_band(l_max)?;
        Ok(Self {
            l_max,
            coeffs: vec![[0.0; 3]; sh_count(l_max)],
        })
    }

    pub fn from_vec(l_max: usize, coeffs: Vec<[f64; 3]>) -> Result<Self> {
        check_band(l_max)?;
        if coeffs.len() != sh_count(l_max) {
            return Err(domain_err!(
                "expected {} SH coefficients for band {l_max}, got {}",
                sh_count(l_max),
                coeffs.len()
            ));
        }
        Ok(Self { l_max, coeffs })
    }

    /// From a channel-major flat slice `[R_0..R_n, G_0..G_n, B_0..B_n]`.
    pub fn from_channel_major(l_max: usize, flat: &[f64]) -> Result<Self> {
        let n = sh_count(l_max);
        if flat.len() != 3 * n {
            return Err(domain_err!("expected {} values, got {}", 3 * n, flat.len()));
        }
        let coeffs = (0..n).map(|i| [flat[i], flat[n + i], flat[2 * n + i]]).collect();
        Self::from_vec(l_max, coeffs)
    }

    pub fn to_channel_major(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut out = vec![0.0; 3 * n];
        for (i, c) in self.coeffs.iter().enumerate() {
            for ch in 0..3 {
                out[ch * n + i] = c[ch];
            }
        }
        out
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    pub fn get(&self, l: usize, m: i64) -> [f64; 3] {
        self.coeffs[sh_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: [f64; 3]) {
        self.coeffs[sh_index(l, m)] = v;
    }

    /// Unclamped expansion given precomputed basis values.
    pub fn eval_with_basis(&self, basis: &[f64]) -> Vec3 {
        let mut acc = [0.0; 3];
        for (c, &y) in self.coeffs.iter().zip(basis) {
            for ch in 0..3 {
                acc[ch] += c[ch] * y;
            }
        }
        Vec3::from(acc)
    }
}

/// Incident radiance `max(0, sum c Y)` per channel.
pub fn sh_radiance(c: &ShCoefficients, w: Direction) -> Vec3 {
    let mut basis = vec![0.0; sh_count(c.l_max)];
    sh_basis_into(c.l_max, w.vec(), &mut basis);
    let v = c.eval_with_basis(&basis);
    Vec3::new(v.x.max(0.0), v.y.max(0.0), v.z.max(0.0))
}

/// Least-squares fit of an SH expansion to radiance samples.
pub fn sh_project_least_squares(
    l_max: usize,
    dirs: &[Direction],
    values: &[Vec3],
) -> Result<ShCoefficients> {
    check_band(l_max)?;
    let n = sh_count(l_max);
    if dirs.len() != values.len() || dirs.len() < n {
        return Err(domain_err!(
            "least-squares SH projection needs at least {n} matched samples, got {} dirs / {} values",
            dirs.len(),
            values.len()
        ));
    }
    let mut a = DMatrix::<f64>::zeros(dirs.len(), n);
    let mut row = vec![0.0; n];
    for (r, d) in dirs.iter().enumerate() {
        sh_basis_into(l_max, d.vec(), &mut row);
        for (c, &y) in row.iter().enumerate() {
            a[(r, c)] = y;
        }
    }
    let svd = a.svd(true, true);
    let mut coeffs = vec![[0.0; 3]; n];
    for ch in 0..3 {
        let b = DVector::from_iterator(values.len(), values.iter().map(|v| v[ch]));
        let x = svd
            .solve(&b, 1e-12)
            .map_err(|e| Error::Numerical(format!("SH least squares failed: {e}")))?;
        for i in 0..n {
            coeffs[i][ch] = x[i];
        }
    }
    ShCoefficients::from_vec(l_max, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::quadrature::gauss_legendre;

    fn up() -> Direction {
        Direction::new(Vec3::new(0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn constant_band() {
        let d = Direction::normalize(Vec3::new(0.4, -0.2, 0.1)).unwrap();
        let y = sh_basis(0, d).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - 0.2820948).abs() < 1e-7);
    }

    #[test]
    fn band_one_at_pole() {
        // K_1^0 P_1^0(1) = sqrt(3/4pi); every m != 0 term carries sin(theta) = 0.
        let y = sh_basis(1, up()).unwrap();
        let expected = [0.282095, 0.0, 0.488603, 0.0];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_large_band() {
        assert!(sh_basis(10, up()).is_err());
        assert!(ShCoefficients::zeros(10).is_err());
    }

    #[test]
    fn index_layout_is_bijective() {
        let mut seen = vec![false; sh_count(MAX_BAND)];
        for l in 0..=MAX_BAND {
            for m in -(l as i64)..=(l as i64) {
                let i = sh_index(l, m);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(sh_lm(i), (l, m));
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn gram_matrix_is_identity() {
        let l_max = 5;
        let n = sh_count(l_max);
        let (x, w) = gauss_legendre(32);
        let n_phi = 64;
        let mut gram = vec![0.0; n * n];
        let mut y = vec![0.0; n];
        for (&ct, &wt) in x.iter().zip(&w) {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                let dir = Vec3::new(st * phi.cos(), st * phi.sin(), ct);
                sh_basis_into(l_max, dir, &mut y);
                let dw = wt * 2.0 * PI / n_phi as f64;
                for i in 0..n {
                    for j in 0..n {
                        gram[i * n + j] += dw * y[i] * y[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * n + j] - e).abs() < 1e-6, "({i},{j}) {}", gram[i * n + j]);
            }
        }
    }

    #[test]
    fn radiance_clamps_and_constant() {
        let mut c = ShCoefficients::zeros(2).unwrap();
        let d = Direction::normalize(Vec3::new(1.0, 2.0, -0.5)).unwrap();
        assert_eq!(sh_radiance(&c, d), Vec3::ZERO);
        c.set(0, 0, [1.0, 1.0, 1.0]);
        let r = sh_radiance(&c, d);
        assert!((r.x - 0.282095).abs() < 1e-6 && (r.z - 0.282095).abs() < 1e-6);
        c.set(0, 0, [-1.0, -2.0, -0.5]);
        assert_eq!(sh_radiance(&c, d), Vec3::ZERO);
    }

    #[test]
    fn channel_major_round_trip() {
        let flat: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let c = ShCoefficients::from_channel_major(1, &flat).unwrap();
        assert_eq!(c.get(0, 0), [0.0, 4.0, 8.0]);
        assert_eq!(c.to_channel_major(), flat);
    }

    #[test]
    fn least_squares_recovers_band_limited_signal() {
        let mut truth = ShCoefficients::zeros(3).unwrap();
        truth.set(0, 0, [2.0, 1.0, 0.5]);
        truth.set(1, -1, [0.3, -0.2, 0.1]);
        truth.set(2, 1, [-0.4, 0.25, 0.0]);
        truth.set(3, -3, [0.1, 0.1, -0.1]);
        let mut dirs = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / 20.0;
                let phi = 2.0 * PI * (j as f64 + 0.5) / 20.0;
                let r = (1.0 - z * z).sqrt();
                dirs.push(Direction::normalize(Vec3::new(r * phi.cos(), r * phi.sin(), z)).unwrap());
            }
        }
        let mut y = vec![0.0; sh_count(3)];
        let values: Vec<Vec3> = dirs
            .iter()
            .map(|d| {
                sh_basis_into(3, d.vec(), &mut y);
                truth.eval_with_basis(&y)
            })
            .collect();
        let fit = sh_project_least_squares(3, &dirs, &values).unwrap();
        for (a, b) in fit.coeffs().iter().zip(truth.coeffs()) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() < 1e-9);
            }
        }
    }
}
