//! Image and depth rasters with PNG and PFM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Row-major RGB image with values in `[0, 1]`; row 0 is the top.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

/// Row-major float raster; row 0 is the top.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    /// Box-filter downsample by an integer factor.
    pub fn downsample(&self, factor: usize) -> Self {
        let f = factor.max(1);
        if f == 1 {
            return self.clone();
        }
        let (w, h) = ((self.width / f).max(1), (self.height / f).max(1));
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                let mut n = 0.0;
                for dy in 0..f {
                    for dx in 0..f {
                        let (sx, sy) = (x * f + dx, y * f + dy);
                        if sx < self.width && sy < self.height {
                            let p = self.get(sx, sy);
                            for c in 0..3 {
                                acc[c] += p[c] as f64;
                            }
                            n += 1.0;
                        }
                    }
                }
                pixels.push(acc.map(|v| (v / n) as f32));
            }
        }
        Self {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(quantize))
            .collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
    }

    /// Reads an 8-bit PNG; an alpha channel is composited over
    /// `background`.
    pub fn read_png(path: &Path, background: [f32; 3]) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?;
        let rgba = img.to_rgba32f();
        let (w, h) = rgba.dimensions();
        let pixels = rgba
            .pixels()
            .map(|p| {
                let a = p[3];
                [0, 1, 2].map(|c| p[c] * a + background[c] * (1.0 - a))
            })
            .collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            pixels,
        })
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Greyscale little-endian PFM (`Pf`, negative scale), rows stored
    /// bottom to top as the format requires.
    pub fn to_pfm_bytes(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                out.extend_from_slice(&self.get(x, y).to_le_bytes());
            }
        }
        out
    }

    pub fn from_pfm_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |r: &str| Error::dataset(path, format!("PFM: {r}"));
        // header is three whitespace-terminated tokens lines
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        pos += 1; // single whitespace byte after the scale
        if fields[0] != "Pf" {
            return Err(bad("only greyscale 'Pf' files are supported"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("scale"))?;
        let little = scale < 0.0;
        let body = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
        if body.len() != 4 * width * height {
            return Err(bad(&format!(
                "raster has {} bytes, expected {}",
                body.len(),
                4 * width * height
            )));
        }
        let mut values = vec![0.0f32; width * height];
        for (i, c) in body.chunks_exact(4).enumerate() {
            let raw: [u8; 4] = c.try_into().unwrap();
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let (row_from_bottom, x) = (i / width, i % width);
            values[(height - 1 - row_from_bottom) * width + x] = v;
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pfm_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pfm_bytes(&bytes, path)
    }
}
