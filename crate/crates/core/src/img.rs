//! Image containers and binary PPM/PGM serialization.
//!
//! RGB values live in [0, 1] as f64 and are quantized to 8 bits only at the
//! file boundary. Masks are strictly 0/1. Depth images carry `None` where a
//! ray produced no return.

use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("pixel index ({0}, {1}) outside {2}x{3} image")]
    OutOfBounds(u32, u32, u32, u32),
    #[error("malformed {0} header")]
    BadHeader(&'static str),
    #[error("unsupported max value {0} (only 255 is supported)")]
    BadMaxVal(u32),
    #[error("truncated pixel data: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Dense row-major RGB image, channels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

/// Dense row-major binary mask, values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Dense row-major depth image in meters along the optical axis; `None`
/// marks a no-return pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<Option<f64>>,
}

macro_rules! impl_dims {
    ($ty:ty) => {
        impl $ty {
            pub fn width(&self) -> u32 {
                self.width
            }
            pub fn height(&self) -> u32 {
                self.height
            }
            fn idx(&self, x: u32, y: u32) -> usize {
                debug_assert!(x < self.width && y < self.height);
                (y as usize) * (self.width as usize) + x as usize
            }
        }
    };
}

impl_dims!(RgbImage);
impl_dims!(Mask);
impl_dims!(DepthImage);

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        Ok(RgbImage { width, height, data: vec![[0.0; 3]; (width as usize) * (height as usize)] })
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Result<Self, ImageError> {
        let mut img = Self::new(width, height)?;
        img.data.fill(rgb);
        Ok(img)
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let i = self.idx(x, y);
        self.data[i] = rgb;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    /// Encodes as binary PPM (P6), 8 bits per channel.
    pub fn write_ppm<W: Write>(&self, w: &mut W) -> Result<(), ImageError> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len() * 3);
        for px in &self.data {
            for c in px {
                buf.push(quantize(*c));
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save_ppm<P: AsRef<Path>>(&self, path: P) -> Result<(), ImageError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ppm(&mut f)
    }

    pub fn read_ppm<R: Read>(r: &mut R) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let (w, h, data) = parse_pnm(&bytes, b"P6", 3)?;
        let pixels = data
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        Ok(RgbImage { width: w, height: h, data: pixels })
    }

    pub fn load_ppm<P: AsRef<Path>>(path: P) -> Result<Self, ImageError> {
        Self::read_ppm(&mut io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Bilinear resample to `width` x `height`. At identical dimensions the
    /// output is bit-identical to the input.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Result<Self, ImageError> {
        let mut out = RgbImage::new(width, height)?;
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = src_y.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let fy = src_y - y0 as f64;
            for x in 0..width {
                let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = src_x.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let fx = src_x - x0 as f64;
                let mut px = [0.0; 3];
                for (c, out_c) in px.iter_mut().enumerate() {
                    let v00 = self.get(x0, y0)[c];
                    let v10 = self.get(x1, y0)[c];
                    let v01 = self.get(x0, y1)[c];
                    let v11 = self.get(x1, y1)[c];
                    *out_c = v00 * (1.0 - fx) * (1.0 - fy)
                        + v10 * fx * (1.0 - fy)
                        + v01 * (1.0 - fx) * fy
                        + v11 * fx * fy;
                }
                out.set(x, y, px);
            }
        }
        Ok(out)
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        Ok(Mask { width, height, data: vec![0; (width as usize) * (height as usize)] })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        let mut m = Self::new(width, height)?;
        m.data.fill(if value != 0 { 1 } else { 0 });
        Ok(m)
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let i = self.idx(x, y);
        self.data[i] = if value != 0 { 1 } else { 0 };
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Encodes as binary PGM (P5) with foreground at 255.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> Result<(), ImageError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let buf: Vec<u8> = self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save_pgm<P: AsRef<Path>>(&self, path: P) -> Result<(), ImageError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_pgm(&mut f)
    }

    /// Reads a P5 file; any value above 127 is foreground.
    pub fn read_pgm<R: Read>(r: &mut R) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let (w, h, data) = parse_pnm(&bytes, b"P5", 1)?;
        Ok(Mask { width: w, height: h, data: data.iter().map(|&v| (v > 127) as u8).collect() })
    }

    pub fn load_pgm<P: AsRef<Path>>(path: P) -> Result<Self, ImageError> {
        Self::read_pgm(&mut io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Nearest-neighbor resample; output stays strictly binary.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<Self, ImageError> {
        let mut out = Mask::new(width, height)?;
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let src_y = (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as u32).min(self.height - 1);
            for x in 0..width {
                let src_x = (((x as f64 + 0.5) * sx - 0.5).round().max(0.0) as u32).min(self.width - 1);
                out.set(x, y, self.get(src_x, src_y));
            }
        }
        Ok(out)
    }
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        Ok(DepthImage { width, height, data: vec![None; (width as usize) * (height as usize)] })
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        self.data[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, depth: Option<f64>) {
        let i = self.idx(x, y);
        self.data[i] = depth;
    }
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Parses a binary PNM header (`P5`/`P6`), returning dims and raw samples.
fn parse_pnm(bytes: &[u8], magic: &'static [u8], channels: usize) -> Result<(u32, u32, Vec<u8>), ImageError> {
    let name = if magic == b"P6" { "PPM" } else { "PGM" };
    let mut pos = 0usize;
    let mut fields: Vec<u32> = Vec::new();

    if bytes.len() < 2 || &bytes[0..2] != magic {
        return Err(ImageError::BadHeader(name));
    }
    pos += 2;
    while fields.len() < 3 {
        // skip whitespace and comments
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::BadHeader(name));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| ImageError::BadHeader(name))?;
        fields.push(text.parse().map_err(|_| ImageError::BadHeader(name))?);
    }
    if fields[2] != 255 {
        return Err(ImageError::BadMaxVal(fields[2]));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::BadHeader(name));
    }
    pos += 1; // single whitespace after maxval
    let (w, h) = (fields[0], fields[1]);
    if w == 0 || h == 0 {
        return Err(ImageError::EmptyImage);
    }
    let expected = (w as usize) * (h as usize) * channels;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(ImageError::Truncated { expected, got: data.len() });
    }
    Ok((w, h, data[..expected].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let mut img = RgbImage::new(3, 2).unwrap();
        img.set(0, 0, [1.0, 0.0, 0.5]);
        img.set(2, 1, [0.25, 0.75, 1.0]);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        let back = RgbImage::read_ppm(&mut buf.as_slice()).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        // quantized to 8 bits, so compare at that resolution
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1.0 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_round_trip_stays_binary() {
        let mut m = Mask::new(4, 4).unwrap();
        m.set(1, 2, 1);
        m.set(3, 0, 1);
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        let back = Mask::read_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
        assert!(back.values().iter().all(|&v| v == 0 || v == 1));
    }

    #[test]
    fn pnm_rejects_garbage() {
        assert!(RgbImage::read_ppm(&mut &b"P5\n2 2\n255\nxxxx"[..]).is_err());
        assert!(Mask::read_pgm(&mut &b"P5\n2 2\n255\nab"[..]).is_err()); // truncated
    }

    #[test]
    fn identity_resize_is_exact() {
        let mut img = RgbImage::new(7, 5).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                img.set(x, y, [x as f64 / 7.0, y as f64 / 5.0, 0.3]);
            }
        }
        assert_eq!(img.resize_bilinear(7, 5).unwrap(), img);
    }
}
