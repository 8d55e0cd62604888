//! Intensity images in [0, 1] and binary PGM/PPM codecs.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pixel;

/// Row-major, channel-interleaved image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// Bilinear sample plus its derivative with respect to (u, v).
#[derive(Debug, Clone, Copy)]
pub(crate) struct BilinearCell {
    pub x0: usize,
    pub y0: usize,
    pub ax: f64,
    pub ay: f64,
}

impl BilinearCell {
    /// Cell for a point in `[0, w-1] × [0, h-1]`; the last row/column reuse
    /// the preceding cell so that integer coordinates reproduce grid values.
    #[inline]
    pub fn locate(p: Pixel, width: usize, height: usize) -> Self {
        let x0 = (p.u.floor() as usize).min(width.saturating_sub(2));
        let y0 = (p.v.floor() as usize).min(height.saturating_sub(2));
        BilinearCell {
            x0,
            y0,
            ax: p.u - x0 as f64,
            ay: p.v - y0 as f64,
        }
    }

    /// Four neighbour indices and weights: (x0,y0), (x1,y0), (x0,y1), (x1,y1).
    #[inline]
    pub fn taps(&self, width: usize) -> [(usize, f64); 4] {
        let i = self.y0 * width + self.x0;
        let (ax, ay) = (self.ax, self.ay);
        [
            (i, (1.0 - ax) * (1.0 - ay)),
            (i + 1, ax * (1.0 - ay)),
            (i + width, (1.0 - ax) * ay),
            (i + width + 1, ax * ay),
        ]
    }

    /// Value and (d/du, d/dv) of the bilinear interpolant of `f`.
    #[inline]
    pub fn eval<F: Fn(usize) -> f64>(&self, width: usize, f: F) -> (f64, f64, f64) {
        let i = self.y0 * width + self.x0;
        let (a, b, c, d) = (f(i), f(i + 1), f(i + width), f(i + width + 1));
        let (ax, ay) = (self.ax, self.ay);
        let top = a + ax * (b - a);
        let bot = c + ax * (d - c);
        let val = top + ay * (bot - top);
        let du = (b - a) * (1.0 - ay) + (d - c) * ay;
        let dv = bot - top;
        (val, du, dv)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut img = Image::new(width, height, 1);
        for v in 0..height {
            for u in 0..width {
                img.data[v * width + u] = f(u, v);
            }
        }
        img
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Image::from_fn(width, height, |_, _| value)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.width * self.height * self.channels {
            return Err(Error::Shape("image buffer length".into()));
        }
        if !self.data.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)) {
            return Err(Error::Shape("image values must be finite and in [0, 1]".into()));
        }
        Ok(())
    }

    /// Bilinear sample of channel `c`; `None` outside `[0, w-1] × [0, h-1]`.
    pub fn sample(&self, p: Pixel, c: usize) -> Option<f64> {
        if !(p.u >= 0.0 && p.v >= 0.0 && p.u <= (self.width - 1) as f64 && p.v <= (self.height - 1) as f64) {
            return None;
        }
        let cell = BilinearCell::locate(p, self.width, self.height);
        let ch = self.channels;
        Some(cell.eval(self.width, |i| self.data[i * ch + c]).0)
    }

    /// Channel-averaged grey image.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let mut g = Image::new(self.width, self.height, 1);
        for i in 0..self.num_pixels() {
            g.data[i] = (self.data[3 * i] + self.data[3 * i + 1] + self.data[3 * i + 2]) / 3.0;
        }
        g
    }

    /// Reads a binary PGM (P5) or PPM (P6), 8 or 16 bit.
    pub fn read_pnm(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let pnm = Pnm::decode(&bytes).map_err(|m| Error::format(path, m))?;
        let maxval = pnm.maxval as f64;
        Ok(Image {
            width: pnm.width,
            height: pnm.height,
            channels: pnm.channels,
            data: pnm.samples.iter().map(|&s| s as f64 / maxval).collect(),
        })
    }

    /// Writes a 16-bit binary PGM/PPM; values are rounded to `k / 65535`.
    pub fn write_pnm16(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let samples: Vec<u16> = self
            .data
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let pnm = Pnm {
            width: self.width,
            height: self.height,
            channels: self.channels,
            maxval: 65535,
            samples,
        };
        write_file(path, &pnm.encode(comment))
    }

    /// Writes an 8-bit binary PGM/PPM (visualisation only, lossy).
    pub fn write_pnm8(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let samples: Vec<u16> = self
            .data
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u16)
            .collect();
        let pnm = Pnm {
            width: self.width,
            height: self.height,
            channels: self.channels,
            maxval: 255,
            samples,
        };
        write_file(path, &pnm.encode(comment))
    }

    /// Rounds every value onto the 16-bit grid so a PNM round trip is exact.
    pub fn quantize16(&mut self) {
        for x in &mut self.data {
            *x = (x.clamp(0.0, 1.0) * 65535.0).round() as u16 as f64 / 65535.0;
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Raw netpbm payload (P5/P6).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pnm {
    pub fn decode(bytes: &[u8]) -> std::result::Result<Pnm, String> {
        let mut pos = 0usize;
        let token = |pos: &mut usize| -> std::result::Result<String, String> {
            // Skip whitespace and comments.
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(format!("unsupported magic {other:?} (expected P5 or P6)")),
        };
        let num = |s: String| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
        let width = num(token(&mut pos)?)?;
        let height = num(token(&mut pos)?)?;
        let maxval = num(token(&mut pos)?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        // Exactly one whitespace byte separates header and raster.
        pos += 1;
        let n = width * height * channels;
        let bps = if maxval < 256 { 1 } else { 2 };
        let raster = bytes.get(pos..).unwrap_or(&[]);
        if raster.len() != n * bps {
            return Err(format!(
                "raster has {} bytes, expected {} ({}x{}x{} at {} byte(s) per sample)",
                raster.len(),
                n * bps,
                width,
                height,
                channels,
                bps
            ));
        }
        let samples = if bps == 1 {
            raster.iter().map(|&b| b as u16).collect()
        } else {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        };
        Ok(Pnm {
            width,
            height,
            channels,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn encode(&self, comment: Option<&str>) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = Vec::with_capacity(self.samples.len() * 2 + 64);
        out.extend_from_slice(magic.as_bytes());
        out.push(b'\n');
        if let Some(c) = comment {
            for line in c.lines() {
                out.extend_from_slice(format!("# {line}\n").as_bytes());
            }
        }
        out.extend_from_slice(format!("{} {}\n{}\n", self.width, self.height, self.maxval).as_bytes());
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }
}
