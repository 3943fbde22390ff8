//! 8-bit raster images shared by textures, rendered patches and warps.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(u8),
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

/// A rendered or warped eye patch.
pub type EyePatchImage = Image;

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, fill: u8) -> Result<Self, ImageError> {
        check_channels(channels)?;
        let len = width as usize * height as usize * channels as usize;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![fill; len],
        })
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        check_channels(channels)?;
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u8,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut img = Self::new(width, height, channels, 0)?;
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                img.put(x, y, &px[..channels as usize]);
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn put(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    /// Bilinear sample at continuous pixel coordinates, where pixel `(i, j)`
    /// has its centre at `(i + 0.5, j + 0.5)`. Out-of-range lookups clamp to
    /// the border. Writes `channels` values into `out`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let w = self.width as i64;
        let h = self.height as i64;
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let clamp = |v: i64, hi: i64| v.clamp(0, hi - 1) as u32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let xs = [clamp(x0, w), clamp(x0 + 1, w)];
        let ys = [clamp(y0, h), clamp(y0 + 1, h)];
        let weights = [
            (1.0 - ax) * (1.0 - ay),
            ax * (1.0 - ay),
            (1.0 - ax) * ay,
            ax * ay,
        ];
        let taps = [(xs[0], ys[0]), (xs[1], ys[0]), (xs[0], ys[1]), (xs[1], ys[1])];
        for c in out.iter_mut().take(self.channels as usize) {
            *c = 0.0;
        }
        for ((tx, ty), wgt) in taps.iter().zip(weights) {
            let px = self.pixel(*tx, *ty);
            for (c, v) in out.iter_mut().zip(px) {
                *c += wgt * *v as f64;
            }
        }
    }

    /// Luma conversion (Rec. 601 weights); gray images are returned as-is.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                quantize(l)
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn with_channels(&self, channels: u8) -> Result<Image, ImageError> {
        match channels {
            1 => Ok(self.to_gray()),
            3 => Ok(self.to_rgb()),
            c => Err(ImageError::Channels(c)),
        }
    }

    /// Loads any format the `image` crate can decode; gray sources stay
    /// single-channel, everything else becomes RGB.
    pub fn load(path: &Path) -> Result<Image, ImageError> {
        let dynamic = image::open(path)?;
        let img = match dynamic.color().channel_count() {
            1 | 2 => {
                let g = dynamic.to_luma8();
                let (w, h) = g.dimensions();
                Image::from_raw(w, h, 1, g.into_raw())?
            }
            _ => {
                let rgb = dynamic.to_rgb8();
                let (w, h) = rgb.dimensions();
                Image::from_raw(w, h, 3, rgb.into_raw())?
            }
        };
        Ok(img)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            _ => image::ExtendedColorType::Rgb8,
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn check_channels(c: u8) -> Result<(), ImageError> {
    match c {
        1 | 3 => Ok(()),
        c => Err(ImageError::Channels(c)),
    }
}
