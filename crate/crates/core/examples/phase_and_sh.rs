//! Henyey-Greenstein sampling and spherical-harmonic projection.
//!
//! Draws directions from the HG lobe, checks that the empirical mean cosine
//! matches `g`, and projects a clamped cosine lobe onto SH bands 0..=5.

use neumedia::mathkit::{hg_eval, hg_sample, sh_basis, sh_count, Direction, RngStream, Vec3};

fn main() -> neumedia::Result<()> {
    let w_o = Direction::new(Vec3::new(0.0, 0.0, 1.0))?;
    let mut rng = RngStream::new(7, 0);
    for g in [-0.6, 0.0, 0.3, 0.9] {
        let n = 200_000;
        let mut mean_cos = 0.0;
        let mut pdf_err: f64 = 0.0;
        for _ in 0..n {
            let (w_i, pdf) = hg_sample(w_o, g, rng.uniform(), rng.uniform())?;
            mean_cos += w_o.dot(w_i) / n as f64;
            pdf_err = pdf_err.max((pdf - hg_eval(w_o, w_i, g)?).abs());
        }
        println!("g = {g:+.2}: mean cosine {mean_cos:+.4}, max |pdf - p| {pdf_err:.1e}");
    }

    let l_max = 5;
    let n = 100_000;
    let mut coeffs = vec![0.0; sh_count(l_max)];
    for _ in 0..n {
        let z = 1.0 - 2.0 * rng.uniform();
        let phi = 2.0 * std::f64::consts::PI * rng.uniform();
        let r = (1.0 - z * z).sqrt();
        let w = Direction::new(Vec3::new(r * phi.cos(), r * phi.sin(), z))?;
        let f = z.max(0.0);
        for (c, y) in coeffs.iter_mut().zip(sh_basis(l_max, w)?) {
            *c += 4.0 * std::f64::consts::PI * f * y / n as f64;
        }
    }
    println!("clamped-cosine SH energy per band:");
    for l in 0..=l_max {
        let e: f64 = coeffs[l * l..(l + 1) * (l + 1)].iter().map(|c| c * c).sum();
        println!("  l = {l}: {e:.5}");
    }
    Ok(())
}
