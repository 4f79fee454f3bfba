use num_traits::Float;

/// Scalar type of the differentiable engine: `f32` for training, `f64` for
/// verification.
pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `c = alpha * op(a) * op(b) + beta * c` for row-major operands, where
    /// `op` optionally transposes. `a` is `m x k`, `b` is `k x n` after `op`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], ta: bool, b: &[Self], tb: bool, beta: Self, c: &mut [Self]);

    fn lift(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(m: usize, k: usize, n: usize, a: &[Self], ta: bool, b: &[Self], tb: bool, beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                // (row stride, col stride) of op(x) in terms of the stored layout
                let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the asserts above guarantee every index the strides
                // can reach is inside the slices.
                unsafe {
                    $gemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
                }
            }

            #[inline]
            fn lift(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_products() {
        // a = [[1,2,3],[4,5,6]] (2x3), b = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T a  (3x3)
        let mut d = [0.0f64; 9];
        f64::gemm(3, 2, 3, &a, true, &a, false, 0.0, &mut d);
        assert_eq!(d, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a a^T (2x2), accumulate
        let mut e = [1.0f64; 4];
        f64::gemm(2, 3, 2, &a, false, &a, true, 1.0, &mut e);
        assert_eq!(e, [15.0, 33.0, 33.0, 78.0]);
    }
}
