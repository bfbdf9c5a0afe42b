//! 8-bit grayscale raster, portable graymap IO, and intensity statistics.
//!
//! Only P2 (ASCII) and P5 (binary) graymaps with maxval 255 are accepted;
//! `#` comments are allowed anywhere in the header. [`save_image`] always
//! emits P5, and `load(save(img)) == img` for every valid image.

use crate::error::{Error, Result};
use crate::Real;
use std::path::Path;

/// Row-major 8-bit single-channel raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    /// Wraps raw pixel data. Fails if `data.len() != width * height` or a
    /// dimension is zero.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be nonzero, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Domain(format!(
                "pixel buffer length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("nonzero dimensions")
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("nonzero dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel slice, length `width * height`.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel fetch with clamp-to-edge semantics for out-of-range signed coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn histogram(&self) -> Histogram {
        let mut bins = [0u64; 256];
        for &v in &self.data {
            bins[v as usize] += 1;
        }
        Histogram {
            bins,
            total: self.data.len() as u64,
        }
    }

    /// Histogram-weighted mean intensity; equal to the arithmetic mean of
    /// the pixel values.
    pub fn mean_intensity<S: Real>(&self) -> S {
        self.histogram().mean()
    }
}

/// 256-bin intensity histogram.
#[derive(Clone, Debug)]
pub struct Histogram {
    bins: [u64; 256],
    total: u64,
}

impl Histogram {
    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    /// Total pixel count; always equals the sum of the bins.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Mean intensity weighted by bin counts.
    pub fn mean<S: Real>(&self) -> S {
        let weighted: u64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(v, &count)| v as u64 * count)
            .sum();
        let weighted = S::from_u64(weighted).expect("finite count");
        let total = S::from_u64(self.total).expect("finite count");
        weighted / total
    }
}

/// Decodes a P2 or P5 portable graymap with maxval 255.
pub fn load_image(bytes: &[u8]) -> Result<GrayImage> {
    let mut p = Parser { bytes, pos: 0 };
    let magic = p.take_magic()?;
    let width = p.next_int("width")?;
    let height = p.next_int("height")?;
    if width == 0 || height == 0 {
        return Err(Error::PnmParse {
            offset: p.pos,
            message: format!("zero image dimension {width}x{height}"),
        });
    }
    let maxval_offset = p.skip_separators();
    let maxval = p.next_int("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            maxval,
            offset: maxval_offset,
        });
    }
    let npixels = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::PnmParse {
            offset: p.pos,
            message: format!("image dimensions {width}x{height} overflow"),
        })?;

    let data = match magic {
        Magic::P2 => {
            let mut data = Vec::with_capacity(npixels);
            for _ in 0..npixels {
                let offset = p.skip_separators();
                let v = p.next_int("pixel value")?;
                if v > 255 {
                    return Err(Error::PnmParse {
                        offset,
                        message: format!("pixel value {v} exceeds maxval 255"),
                    });
                }
                data.push(v as u8);
            }
            data
        }
        Magic::P5 => {
            p.take_single_separator()?;
            let remaining = p.bytes.len() - p.pos;
            if remaining < npixels {
                return Err(Error::PnmParse {
                    offset: p.bytes.len(),
                    message: format!(
                        "truncated pixel data: expected {npixels} bytes, found {remaining}"
                    ),
                });
            }
            p.bytes[p.pos..p.pos + npixels].to_vec()
        }
    };
    GrayImage::new(width as usize, height as usize, data)
}

/// Encodes an image as a binary (P5) graymap.
pub fn save_image(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn load_image_file(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_image(&bytes)
}

pub fn save_image_file(img: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, save_image(img)).map_err(|e| Error::io(path, e))
}

enum Magic {
    P2,
    P5,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn take_magic(&mut self) -> Result<Magic> {
        match self.bytes.get(..2) {
            Some(b"P2") => {
                self.pos = 2;
                Ok(Magic::P2)
            }
            Some(b"P5") => {
                self.pos = 2;
                Ok(Magic::P5)
            }
            _ => Err(Error::PnmParse {
                offset: 0,
                message: "malformed magic number (expected P2 or P5)".into(),
            }),
        }
    }

    /// Skips whitespace and `#` comments; returns the offset of the next token.
    fn skip_separators(&mut self) -> usize {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return self.pos,
            }
        }
    }

    /// Exactly one whitespace byte separates the header from P5 pixel data.
    fn take_single_separator(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::PnmParse {
                offset: self.pos,
                message: "expected whitespace between header and pixel data".into(),
            }),
        }
    }

    fn next_int(&mut self, what: &str) -> Result<u64> {
        let offset = self.skip_separators();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::PnmParse {
                offset,
                message: format!("expected {what}"),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<u64>().map_err(|_| Error::PnmParse {
            offset,
            message: format!("{what} out of range"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ascii_graymap() {
        let img = load_image(b"P2 2 2 255 0 100 100 200").unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0, 100, 100, 200]);
    }

    #[test]
    fn ascii_and_binary_decode_identically() {
        let p2 = load_image(b"P2\n2 2\n255\n0 100 100 200\n").unwrap();
        let p5 = load_image(b"P5\n2 2\n255\n\x00\x64\x64\xc8").unwrap();
        assert_eq!(p2, p5);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = load_image(b"P2 # comment\n# another\n2 2 # w h\n255\n0 100 100 200").unwrap();
        assert_eq!(img.data(), &[0, 100, 100, 200]);
    }

    #[test]
    fn rejects_wide_maxval() {
        let err = load_image(b"P2 2 2 65535 0 0 0 0").unwrap_err();
        match err {
            Error::UnsupportedMaxval { maxval, .. } => assert_eq!(maxval, 65535),
            other => panic!("expected UnsupportedMaxval, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let err = load_image(b"P6 2 2 255 junk").unwrap_err();
        match err {
            Error::PnmParse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected PnmParse, got {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_data_names_offset() {
        let err = load_image(b"P5 4 4 255 \x01\x02").unwrap_err();
        assert!(matches!(err, Error::PnmParse { .. }), "{err:?}");
        let text = err.to_string();
        assert!(text.contains("truncated"), "{text}");
    }

    #[test]
    fn ascii_pixel_above_maxval_is_rejected() {
        let err = load_image(b"P2 2 2 255 0 100 300 200").unwrap_err();
        assert!(err.to_string().contains("300"), "{err}");
    }

    #[test]
    fn round_trip_identity() {
        let img = GrayImage::new(2, 2, vec![0, 100, 100, 200]).unwrap();
        let reloaded = load_image(&save_image(&img)).unwrap();
        assert_eq!(img, reloaded);
    }

    #[test]
    fn constant_image_payload_bytes() {
        let img = GrayImage::constant(8, 8, 128);
        let bytes = save_image(&img);
        let payload = &bytes[bytes.len() - 64..];
        assert!(payload.iter().all(|&b| b == 0x80));
    }

    #[test]
    fn mean_intensity_examples() {
        let img = GrayImage::new(2, 2, vec![0, 100, 100, 200]).unwrap();
        assert_eq!(img.mean_intensity::<f64>(), 100.0);
        let c = GrayImage::constant(5, 3, 37);
        assert_eq!(c.mean_intensity::<f64>(), 37.0);
    }

    #[test]
    fn mean_matches_direct_sweep() {
        // brute-force oracle: plain mean over the pixel array
        let mut state = 0x2545F4914F6CDD1Du64;
        let img = GrayImage::from_fn(32, 32, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 56) as u8
        });
        let direct =
            img.data().iter().map(|&v| v as f64).sum::<f64>() / (img.data().len() as f64);
        let via_hist = img.mean_intensity::<f64>();
        assert!((direct - via_hist).abs() < 1e-9);
    }
}
