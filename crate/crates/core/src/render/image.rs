use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major multi-channel float image. Normal maps hold camera-space unit
/// vectors directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// Sample depth used when writing PNG files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!((1..=4).contains(&channels), "channel count must be 1..=4");
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !(1..=4).contains(&channels) {
            return Err(Error::dim(format!("channel count {channels} outside 1..=4")));
        }
        if data.len() != width * height * channels {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite image value at index {i}")));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Bilinear lookup at continuous pixel coordinates (pixel centers at
    /// +0.5), with edge clamping. Returns `None` outside the image.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        if !(u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64) {
            return false;
        }
        let fx = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        for c in 0..self.channels {
            let a = self.pixel(x0, y0)[c] * (1.0 - tx) + self.pixel(x1, y0)[c] * tx;
            let b = self.pixel(x0, y1)[c] * (1.0 - tx) + self.pixel(x1, y1)[c] * tx;
            out[c] = a * (1.0 - ty) + b * ty;
        }
        true
    }

    /// 2x box downsample (odd trailing rows/columns are dropped).
    pub fn downsample2(&self) -> ImageBuffer {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut out = ImageBuffer::new(w, h, self.channels);
        for y in 0..h {
            for x in 0..w {
                let xs = [(2 * x).min(self.width - 1), (2 * x + 1).min(self.width - 1)];
                let ys = [(2 * y).min(self.height - 1), (2 * y + 1).min(self.height - 1)];
                for c in 0..self.channels {
                    let mut s = 0.0;
                    for &yy in &ys {
                        for &xx in &xs {
                            s += self.pixel(xx, yy)[c];
                        }
                    }
                    out.pixel_mut(x, y)[c] = 0.25 * s;
                }
            }
        }
        out
    }

    /// Bilinear resize to an arbitrary size.
    pub fn resize(&self, width: usize, height: usize) -> ImageBuffer {
        let mut out = ImageBuffer::new(width, height, self.channels);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut px = vec![0.0; self.channels];
        for y in 0..height {
            for x in 0..width {
                self.sample_bilinear((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy, &mut px);
                out.pixel_mut(x, y).copy_from_slice(&px);
            }
        }
        out
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn set_channel(&mut self, c: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.channels + c] = *v;
        }
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND);
        let image_err = |message: String| Error::Image {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = decoder.read_info().map_err(|e| image_err(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| image_err("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| image_err(e.to_string()))?;
        let channels = info.color_type.samples();
        let (width, height) = (info.width as usize, info.height as usize);
        let count = width * height * channels;
        let data: Vec<f64> = match info.bit_depth {
            png::BitDepth::Eight => buf[..count].iter().map(|&b| b as f64 / 255.0).collect(),
            png::BitDepth::Sixteen => buf[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                .collect(),
            other => return Err(image_err(format!("unsupported bit depth {other:?}"))),
        };
        ImageBuffer::from_data(width, height, channels, data)
    }

    /// Writes values clamped to [0, 1].
    pub fn write_png(&self, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(match self.channels {
            1 => png::ColorType::Grayscale,
            2 => png::ColorType::GrayscaleAlpha,
            3 => png::ColorType::Rgb,
            _ => png::ColorType::Rgba,
        });
        let image_err = |e: png::EncodingError| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let bytes: Vec<u8> = match depth {
            BitDepth::Eight => {
                encoder.set_depth(png::BitDepth::Eight);
                self.data
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect()
            }
            BitDepth::Sixteen => {
                encoder.set_depth(png::BitDepth::Sixteen);
                self.data
                    .iter()
                    .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
                    .collect()
            }
        };
        let mut writer = encoder.write_header().map_err(image_err)?;
        writer.write_image_data(&bytes).map_err(image_err)?;
        writer.finish().map_err(image_err)
    }

    /// Raw float32 container: little-endian u32 width, height, channels,
    /// followed by row-major f32 samples.
    pub fn read_raw(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let image_err = |message: String| Error::Image {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 12 {
            return Err(image_err("truncated header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (width, height, channels) = (word(0), word(1), word(2));
        let count = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| image_err("header size overflows".into()))?;
        if bytes.len() != 12 + 4 * count {
            return Err(image_err(format!(
                "expected {} data bytes for {width}x{height}x{channels}, found {}",
                4 * count,
                bytes.len() - 12
            )));
        }
        let data = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        ImageBuffer::from_data(width, height, channels, data)
    }

    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        for v in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

/// Boolean mask to a one-channel image (1 inside).
pub fn mask_to_image(mask: &[bool], width: usize, height: usize) -> ImageBuffer {
    let data = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    ImageBuffer {
        width,
        height,
        channels: 1,
        data,
    }
}

/// Thresholds the first channel at 0.5.
pub fn image_to_mask(img: &ImageBuffer) -> Vec<bool> {
    img.data.iter().step_by(img.channels).map(|&v| v > 0.5).collect()
}
