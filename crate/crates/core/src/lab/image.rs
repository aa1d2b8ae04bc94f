use std::path::Path;

use crate::error::{Error, Result};

/// Planar (channel-major) image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidParameter(format!(
                "image must be non-empty with 1 or 3 channels, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Used by kernels whose output is in range by construction.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn planes_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        let n = self.width * self.height;
        self.data.chunks_exact_mut(n)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Rounds every value to the nearest multiple of 1/255, the precision of
    /// the 8-bit files the lab writes.
    pub fn quantize_8bit(&mut self) {
        for v in &mut self.data {
            *v = (*v * 255.0).round() / 255.0;
        }
    }

    /// Grey images are replicated into three channels.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image::from_raw(self.width, self.height, 3, data)
    }

    /// Binary PGM (1 channel) or PPM (3 channels), 8-bit.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        let n = self.width * self.height;
        out.reserve(n * self.channels);
        for i in 0..n {
            for c in 0..self.channels {
                out.push((self.data[c * n + i] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Image> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(Error::UnsupportedFormat("truncated PNM header".into()));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("?").to_string());
        }
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "only binary P5/P6 images are supported, found {other:?}"
                )))
            }
        };
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::UnsupportedFormat(format!("bad PNM header field {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if !(1..=255).contains(&maxval) {
            return Err(Error::UnsupportedFormat(format!("maxval {maxval}; only 8-bit images are supported")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = width * height;
        let raster = bytes
            .get(pos..pos + n * channels)
            .ok_or_else(|| Error::UnsupportedFormat("truncated PNM raster".into()))?;
        let mut data = vec![0.0; n * channels];
        for (i, px) in raster.chunks_exact(channels).enumerate() {
            for (c, v) in px.iter().enumerate() {
                data[c * n + i] = (*v as f64 / maxval as f64).min(1.0);
            }
        }
        Image::new(width, height, channels, data)
    }

    pub fn read(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_pnm(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_pnm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker() -> Image {
        let data = (0..3 * 5 * 4).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
        Image::new(5, 4, 3, data).unwrap()
    }

    #[test]
    fn ppm_round_trip_is_exact_for_8bit_values() {
        let img = checker();
        let back = Image::from_pnm(&img.to_pnm()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = Image::from_pnm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
        assert_eq!(img.to_rgb().channels(), 3);
    }

    #[test]
    fn rejects_ascii_and_wide_formats() {
        assert!(matches!(Image::from_pnm(b"P3\n1 1\n255\n0 0 0\n"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(Image::from_pnm(b"P5\n1 1\n65535\n\0\0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(Image::from_pnm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn quantize_is_idempotent() {
        let mut img = Image::new(1, 1, 1, vec![0.3337]).unwrap();
        img.quantize_8bit();
        let once = img.clone();
        img.quantize_8bit();
        assert_eq!(img, once);
        assert_eq!(img.data()[0], 85.0 / 255.0);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
    }
}
