//! Single-channel float rasters and their on-disk encodings.
//!
//! PFM files are written little-endian (negative scale) with rows stored
//! bottom-to-top as the format requires. Masks and previews are 8-bit
//! grayscale PNG.

use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major single-channel `f32` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Geometry(format!(
                "{} values cannot fill a {width}x{height} image",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Largest value, or `None` for an empty image.
    pub fn max(&self) -> Option<f32> {
        self.data.iter().copied().reduce(f32::max)
    }

    pub fn min(&self) -> Option<f32> {
        self.data.iter().copied().reduce(f32::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f32) -> ImageBuffer {
        self.map(|v| v * factor)
    }

    /// Divides by the peak value; all-zero images are returned unchanged.
    pub fn normalized_to_peak(&self) -> ImageBuffer {
        match self.max() {
            Some(m) if m > 0.0 => self.scaled(1.0 / m),
            _ => self.clone(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn ensure_same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Decodes a grayscale PFM (`Pf`) of either endianness.
    pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
        let mut reader = Cursor::new(bytes);
        let magic = read_header_line(&mut reader, 1)?;
        if magic != "Pf" {
            return Err(Error::format(
                1,
                format!("expected grayscale PFM magic `Pf`, found `{magic}`"),
            ));
        }
        let dims = read_header_line(&mut reader, 2)?;
        let mut parts = dims.split_whitespace();
        let parse_dim = |s: Option<&str>| -> Result<usize> {
            s.and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::format(2, format!("invalid dimensions `{dims}`")))
        };
        let width = parse_dim(parts.next())?;
        let height = parse_dim(parts.next())?;
        let scale_line = read_header_line(&mut reader, 3)?;
        let scale: f32 = scale_line
            .parse()
            .map_err(|_| Error::format(3, format!("invalid scale `{scale_line}`")))?;
        if scale == 0.0 {
            return Err(Error::format(3, "scale must be non-zero"));
        }
        let little_endian = scale < 0.0;

        let mut raw = vec![0u8; width * height * 4];
        reader
            .read_exact(&mut raw)
            .map_err(|_| Error::format(0, "truncated PFM pixel data"))?;
        let mut data = vec![0.0f32; width * height];
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            // stored bottom row first
            let (x, row_from_bottom) = (i % width, i / width);
            data[(height - 1 - row_from_bottom) * width + x] = v;
        }
        ImageBuffer::from_vec(width, height, data)
    }

    pub fn encode_pfm(&self) -> Vec<u8> {
        let header = format!("Pf\n{} {}\n-1.0\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len() * 4);
        out.extend_from_slice(header.as_bytes());
        for y in (0..self.height).rev() {
            for v in self.row(y) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pfm(&bytes)
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_pfm()).map_err(|e| Error::io(path, e))
    }

    /// 8-bit PNG, values clamped to [0,1] and scaled to 0..=255.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::Geometry("PNG buffer size".into()))?;
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)?;
        Ok(out)
    }

    /// Decodes any PNG to luminance in [0,1].
    pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        ImageBuffer::from_vec(w as usize, h as usize, data)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }
}

fn read_header_line(reader: &mut impl BufRead, line: usize) -> Result<String> {
    let mut s = String::new();
    let n = reader
        .read_line(&mut s)
        .map_err(|_| Error::format(line, "unreadable PFM header"))?;
    if n == 0 {
        return Err(Error::format(line, "truncated PFM header"));
    }
    Ok(s.trim().to_string())
}
