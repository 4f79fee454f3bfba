use std::f64::consts::PI;

/// Output length of [`positional_encode`] for `dims` inputs.
pub const fn encoded_len(dims: usize, max_band: usize) -> usize {
    dims * 2 * (max_band + 1)
}

/// Frequency encoding `(sin(2^b pi x), cos(2^b pi x))` for `b = 0..=max_band`.
///
/// Layout: for each input dimension, its bands in increasing order, each band
/// contributing a `(sin, cos)` pair.
pub fn positional_encode(x: &[f64], max_band: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(x.len(), max_band)];
    positional_encode_into(x, max_band, &mut out);
    out
}

pub fn positional_encode_into<T: num_traits::Float>(x: &[f64], max_band: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), encoded_len(x.len(), max_band));
    let per_dim = 2 * (max_band + 1);
    for (d, &v) in x.iter().enumerate() {
        let base = &mut out[d * per_dim..(d + 1) * per_dim];
        let mut freq = PI;
        for b in 0..=max_band {
            let (s, c) = (freq * v).sin_cos();
            base[2 * b] = T::from(s).unwrap();
            base[2 * b + 1] = T::from(c).unwrap();
            freq *= 2.0;
        }
    }
}
