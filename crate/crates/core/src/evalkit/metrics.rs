//! Image metrics on tone-mapped pixels.

use crate::error::{domain_err, Result};
use crate::image::HdrImage;
use crate::mathkit::tone::tone_map_scalar;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_dims(a: &HdrImage, b: &HdrImage) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(domain_err!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width,
            a.height,
            b.width,
            b.height
        ));
    }
    Ok(())
}

/// `Γ` then clamped to `[0, 1]`; negative radiance counts as black.
fn display(v: f32) -> f64 {
    tone_map_scalar((v as f64).max(0.0)).clamp(0.0, 1.0)
}

/// Peak signal-to-noise ratio in dB over all tone-mapped channels, peak 1.
/// Identical images give `+inf`.
pub fn psnr(a: &HdrImage, b: &HdrImage) -> Result<f64> {
    check_dims(a, b)?;
    if a.rgb.is_empty() {
        return Err(domain_err!("empty images"));
    }
    let mse = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .map(|(&x, &y)| (display(x) - display(y)).powi(2))
        .sum::<f64>()
        / a.rgb.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Mean over tone-mapped channels of `|Γ(a) - Γ(b)|^2`, square-rooted and
/// divided by the RMS of `Γ(b)`.
pub fn relative_rms(a: &HdrImage, reference: &HdrImage) -> Result<f64> {
    check_dims(a, reference)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &y) in a.rgb.iter().zip(&reference.rgb) {
        let (x, y) = (display(x), display(y));
        num += (x - y).powi(2);
        den += y * y;
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

fn gray(img: &HdrImage) -> Vec<f64> {
    img.rgb
        .chunks_exact(3)
        .map(|p| 0.2126 * display(p[0]) + 0.7152 * display(p[1]) + 0.0722 * display(p[2]))
        .collect()
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering of a `w x h` plane.
fn filter(x: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x0 in 0..ow {
            rows[y * ow + x0] = (0..SSIM_WINDOW).map(|i| k[i] * x[y * w + x0 + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y0 + i) * ow + x0]).sum();
        }
    }
    out
}

/// Structural similarity of the luminance of the tone-mapped images: mean
/// of the local index under an 11x11 Gaussian window (sigma 1.5), dynamic
/// range 1.
pub fn ssim(a: &HdrImage, b: &HdrImage) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(domain_err!("images of {w}x{h} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"));
    }
    let k = gaussian_window();
    let (x, y) = (gray(a), gray(b));
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter(&x, w, h, &k);
    let my = filter(&y, w, h, &k);
    let sxx = filter(&prod(&x, &x), w, h, &k);
    let syy = filter(&prod(&y, &y), w, h, &k);
    let sxy = filter(&prod(&x, &y), w, h, &k);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}
