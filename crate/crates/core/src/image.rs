//! Linear-radiance RGB images with PFM and PNG IO.
//!
//! PFM files are written as `PF`, `width height`, scale `-1.0`
//! (little-endian), then rows from bottom to top. Big-endian files (positive
//! scale) are converted on read. PNG previews are tone mapped `L / (1 + L)`
//! then gamma encoded with exponent 1/2.2.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{domain_err, Error, Result};
use crate::mathkit::tone::tone_map_scalar;
use crate::mathkit::Vec3;

/// RGB raster, row 0 at the top, with optional decomposition layers.
#[derive(Clone, Debug, PartialEq)]
pub struct HdrImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB.
    pub rgb: Vec<f32>,
    pub direct: Option<Vec<f32>>,
    pub indirect: Option<Vec<f32>>,
}

impl HdrImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0.0; width * height * 3],
            direct: None,
            indirect: None,
        }
    }

    pub fn from_pixels(width: usize, height: usize, px: &[Vec3]) -> Result<Self> {
        if px.len() != width * height {
            return Err(domain_err!("{} pixels for a {width}x{height} image", px.len()));
        }
        Ok(Self {
            width,
            height,
            rgb: flatten(px),
            direct: None,
            indirect: None,
        })
    }

    /// Image with direct and indirect layers; the total is their sum.
    pub fn from_layers(width: usize, height: usize, direct: &[Vec3], indirect: &[Vec3]) -> Result<Self> {
        if direct.len() != width * height || indirect.len() != direct.len() {
            return Err(domain_err!("layer sizes do not match {width}x{height}"));
        }
        let (d, i) = (flatten(direct), flatten(indirect));
        let mut img = Self::new(width, height);
        img.rgb = d.iter().zip(&i).map(|(a, b)| a + b).collect();
        img.direct = Some(d);
        img.indirect = Some(i);
        Ok(img)
    }

    pub fn pixel(&self, i: usize) -> Vec3 {
        Vec3::new(self.rgb[3 * i] as f64, self.rgb[3 * i + 1] as f64, self.rgb[3 * i + 2] as f64)
    }

    pub fn pixels(&self) -> Vec<Vec3> {
        (0..self.width * self.height).map(|i| self.pixel(i)).collect()
    }

    /// Stand-alone image of one layer.
    pub fn layer(&self, which: Layer) -> Option<HdrImage> {
        let data = match which {
            Layer::Total => Some(&self.rgb),
            Layer::Direct => self.direct.as_ref(),
            Layer::Indirect => self.indirect.as_ref(),
        }?;
        Some(HdrImage {
            width: self.width,
            height: self.height,
            rgb: data.clone(),
            direct: None,
            indirect: None,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.rgb.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> Vec3 {
        let n = (self.width * self.height).max(1) as f64;
        self.pixels().into_iter().fold(Vec3::ZERO, |a, b| a + b) / n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Total,
    Direct,
    Indirect,
}

fn flatten(px: &[Vec3]) -> Vec<f32> {
    px.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect()
}

pub fn encode_pfm(img: &HdrImage) -> Result<Vec<u8>> {
    if !img.is_finite() {
        return Err(domain_err!("refusing to write non-finite pixels"));
    }
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.rgb.len() * 4);
    for y in (0..img.height).rev() {
        let row = &img.rgb[y * img.width * 3..(y + 1) * img.width * 3];
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<HdrImage> {
    // three whitespace-terminated header tokens plus the scale
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(Error::Parse("truncated PFM header".into()));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Parse("PFM header is not ASCII".into()))?);
    }
    pos += 1; // single whitespace byte after the scale
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Parse(format!("bad PFM magic '{other}'"))),
    };
    let parse_dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PFM dimension '{s}'")));
    let (w, h) = (parse_dim(tokens[1])?, parse_dim(tokens[2])?);
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| Error::Parse(format!("bad PFM scale '{}'", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Parse("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Parse("PFM dimensions overflow".into()))?;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() != n * 4 {
        return Err(Error::Parse(format!("PFM payload is {} bytes, expected {}", payload.len(), n * 4)));
    }
    let vals: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| {
            let b: [u8; 4] = c.try_into().unwrap();
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut img = HdrImage::new(w, h);
    for y in 0..h {
        let src = (h - 1 - y) * w * channels;
        for x in 0..w {
            for c in 0..3 {
                let s = if channels == 3 { c } else { 0 };
                img.rgb[(y * w + x) * 3 + c] = vals[src + x * channels + s];
            }
        }
    }
    Ok(img)
}

pub fn write_pfm(path: &Path, img: &HdrImage) -> Result<()> {
    fs::write(path, encode_pfm(img)?).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<HdrImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

/// 8-bit preview after tone mapping and gamma 1/2.2.
pub fn write_png_preview(path: &Path, img: &HdrImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img
        .rgb
        .iter()
        .map(|&v| {
            let t = tone_map_scalar((v as f64).max(0.0)).powf(1.0 / 2.2);
            (t * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let png_err = |e: png::EncodingError| Error::Data(format!("png encoding of {}: {e}", path.display()));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&bytes).map_err(png_err)?;
    w.finish().map_err(png_err)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    path.with_file_name(format!("{stem}{suffix}.pfm"))
}

/// Writes `path` and, when present, `_direct` / `_indirect` layer files next
/// to it; `png` adds previews. Returns every file written.
pub fn write_image_set(path: &Path, img: &HdrImage, png: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |p: PathBuf, im: &HdrImage| -> Result<()> {
        write_pfm(&p, im)?;
        written.push(p.clone());
        if png {
            let q = p.with_extension("png");
            write_png_preview(&q, im)?;
            written.push(q);
        }
        Ok(())
    };
    emit(path.to_path_buf(), &img.layer(Layer::Total).expect("total layer"))?;
    if let Some(d) = img.layer(Layer::Direct) {
        emit(with_suffix(path, "_direct"), &d)?;
    }
    if let Some(i) = img.layer(Layer::Indirect) {
        emit(with_suffix(path, "_indirect"), &i)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::RngStream;

    fn random_image(w: usize, h: usize) -> HdrImage {
        let mut r = RngStream::new(1, 2);
        let mut img = HdrImage::new(w, h);
        for v in &mut img.rgb {
            *v = (r.uniform() * 10.0) as f32;
        }
        img
    }

    #[test]
    fn pfm_round_trip() {
        let img = random_image(7, 5);
        let back = decode_pfm(&encode_pfm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn big_endian_is_converted() {
        let img = random_image(3, 2);
        let mut bytes = b"PF\n3 2\n1.0\n".to_vec();
        for y in (0..2).rev() {
            for v in &img.rgb[y * 9..(y + 1) * 9] {
                bytes.extend_from_slice(&v.to_be_bytes());
            }
        }
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let mut img = HdrImage::new(1, 2);
        img.rgb[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
        let b = encode_pfm(&img).unwrap();
        let hdr = b"PF\n1 2\n-1.0\n".len();
        assert_eq!(f32::from_le_bytes(b[hdr..hdr + 4].try_into().unwrap()), 0.0);
        assert_eq!(f32::from_le_bytes(b[hdr + 12..hdr + 16].try_into().unwrap()), 1.0);
    }

    #[test]
    fn malformed_files() {
        let b = encode_pfm(&random_image(4, 4)).unwrap();
        assert!(matches!(decode_pfm(&b[..b.len() - 1]), Err(Error::Parse(_))));
        assert!(decode_pfm(b"P6\n1 1\n255\n...").is_err());
        assert!(decode_pfm(b"PF\n").is_err());
        let mut bad = HdrImage::new(1, 1);
        bad.rgb[0] = f32::NAN;
        assert!(encode_pfm(&bad).is_err());
    }

    #[test]
    fn image_set_writes_layers() {
        let dir = tempfile::tempdir().unwrap();
        let px = vec![Vec3::splat(0.5); 4];
        let img = HdrImage::from_layers(2, 2, &px, &px).unwrap();
        let files = write_image_set(&dir.path().join("x.pfm"), &img, true).unwrap();
        assert_eq!(files.len(), 6);
        assert!(dir.path().join("x_indirect.pfm").exists());
        assert_eq!(read_pfm(&dir.path().join("x.pfm")).unwrap().pixel(0), Vec3::splat(1.0));
    }
}
