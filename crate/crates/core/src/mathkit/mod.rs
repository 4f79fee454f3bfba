//! Numerical kernels shared by the oracle, the neural fields and the marcher.

pub mod encoding;
pub mod hg;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod sh;
pub mod tone;
pub mod vec3;

pub use encoding::{encoded_len, positional_encode};
pub use hg::{hg_eval, hg_sample};
pub use rng::RngStream;
pub use sampling::{sample_sphere, SphereSampling, UNIFORM_SPHERE_PDF};
pub use sh::{sh_basis, sh_count, sh_index, sh_radiance, ShCoefficients};
pub use tone::tone_map;
pub use vec3::{Direction, Vec3};
