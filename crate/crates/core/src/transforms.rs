//! Photometric degradations applied to a reference image at controlled
//! amounts: uniform light reduction, Gaussian blur, and a codec-free JPEG
//! simulation (block-DCT quantization round-trip).
//!
//! All transforms preserve image dimensions and use clamp-to-edge border
//! handling so results are deterministic across platforms.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::{real, Real};

/// The three degradation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformKind {
    Light,
    Blur,
    Jpeg,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [TransformKind::Light, TransformKind::Blur, TransformKind::Jpeg];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Light => "light",
            TransformKind::Blur => "blur",
            TransformKind::Jpeg => "jpeg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "light" => Some(TransformKind::Light),
            "blur" => Some(TransformKind::Blur),
            "jpeg" => Some(TransformKind::Jpeg),
            _ => None,
        }
    }

    /// Number of amount levels per kind: 13 for light and JPEG, 9 for blur.
    pub fn ladder_len(self) -> usize {
        match self {
            TransformKind::Light => 13,
            TransformKind::Blur => 9,
            TransformKind::Jpeg => 13,
        }
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One concrete degradation: a kind, its level index, and the amount that
/// level maps to (percent for light, sigma for blur, quality for JPEG).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub level_index: usize,
    pub amount: f64,
}

/// Per-kind amount ladders. Values are configuration; sizes are fixed at
/// 13 (light), 9 (blur), 13 (JPEG).
#[derive(Clone, Debug, PartialEq)]
pub struct Ladders {
    /// Light reduction percentages in [0, 100).
    pub light: Vec<f64>,
    /// Gaussian blur sigmas in pixels, each > 0.
    pub blur: Vec<f64>,
    /// JPEG quality factors in [1, 100]; listed lowest-quality-last-compression
    /// ordering: index 0 is the strongest compression.
    pub jpeg: Vec<f64>,
}

impl Default for Ladders {
    fn default() -> Self {
        Self {
            light: (0..13).map(|i| 30.0 + 5.0 * i as f64).collect(),
            blur: (0..9).map(|i| 0.5 + 0.5 * i as f64).collect(),
            jpeg: (0..13).map(|i| 10.0 + 5.0 * i as f64).collect(),
        }
    }
}

impl Ladders {
    pub fn ladder(&self, kind: TransformKind) -> &[f64] {
        match kind {
            TransformKind::Light => &self.light,
            TransformKind::Blur => &self.blur,
            TransformKind::Jpeg => &self.jpeg,
        }
    }

    /// Checks ladder sizes (13/9/13) and per-kind value domains.
    pub fn validate(&self) -> Result<()> {
        for kind in TransformKind::ALL {
            let ladder = self.ladder(kind);
            if ladder.len() != kind.ladder_len() {
                return Err(Error::Domain(format!(
                    "{kind} ladder must have {} levels, got {}",
                    kind.ladder_len(),
                    ladder.len()
                )));
            }
            for &amount in ladder {
                validate_amount(kind, amount)?;
            }
        }
        Ok(())
    }

    pub fn spec(&self, kind: TransformKind, level_index: usize) -> Result<TransformSpec> {
        let ladder = self.ladder(kind);
        let amount = *ladder.get(level_index).ok_or_else(|| {
            Error::Domain(format!(
                "level index {level_index} outside {kind} ladder of {} levels",
                ladder.len()
            ))
        })?;
        Ok(TransformSpec {
            kind,
            level_index,
            amount,
        })
    }

    /// Total number of operating conditions (35 with default ladder sizes).
    pub fn condition_count(&self) -> usize {
        TransformKind::ALL.iter().map(|k| self.ladder(k.to_owned()).len()).sum()
    }
}

fn validate_amount(kind: TransformKind, amount: f64) -> Result<()> {
    let ok = match kind {
        TransformKind::Light => (0.0..100.0).contains(&amount),
        TransformKind::Blur => amount > 0.0 && amount.is_finite(),
        TransformKind::Jpeg => {
            amount.fract() == 0.0 && (1.0..=100.0).contains(&amount)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("invalid {kind} amount {amount}")))
    }
}

/// Applies `kind` at `amount` (percent / sigma / quality) to `img`.
pub fn apply_transform<S: Real>(img: &GrayImage, kind: TransformKind, amount: f64) -> Result<GrayImage> {
    validate_amount(kind, amount)?;
    match kind {
        TransformKind::Light => light_reduce(img, real::<S>(amount)),
        TransformKind::Blur => gaussian_blur(img, real::<S>(amount)),
        TransformKind::Jpeg => jpeg_roundtrip::<S>(img, amount as u8),
    }
}

/// Uniform light reduction: every pixel `v` becomes
/// `round(v * (1 - amount/100))`. `amount_percent` must lie in [0, 100).
pub fn light_reduce<S: Real>(img: &GrayImage, amount_percent: S) -> Result<GrayImage> {
    if !(amount_percent >= S::zero() && amount_percent < real(100.0)) {
        return Err(Error::Domain(format!(
            "light reduction amount {amount_percent} outside [0, 100)"
        )));
    }
    let factor = S::one() - amount_percent / real(100.0);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let scaled = (real::<S>(v as f64) * factor).round();
            scaled
                .max(S::zero())
                .min(real(255.0))
                .to_u8()
                .expect("clamped to [0,255]")
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel<S: Real>(sigma: S) -> Vec<S> {
    let radius = (sigma * real(3.0)).ceil().to_usize().expect("small radius");
    let two_sigma_sq = real::<S>(2.0) * sigma * sigma;
    let mut taps: Vec<S> = (-(radius as isize)..=radius as isize)
        .map(|i| {
            let d = real::<S>(i as f64);
            (-(d * d) / two_sigma_sq).exp()
        })
        .collect();
    let sum = taps.iter().fold(S::zero(), |acc, &t| acc + t);
    for t in &mut taps {
        *t = *t / sum;
    }
    taps
}

/// Separable Gaussian blur with clamp-to-edge borders; the result is
/// rounded to the nearest integer once, after both passes.
pub fn gaussian_blur<S: Real>(img: &GrayImage, sigma: S) -> Result<GrayImage> {
    if !(sigma > S::zero()) {
        return Err(Error::Domain(format!("blur sigma {sigma} must be > 0")));
    }
    let taps = gaussian_kernel(sigma);
    let radius = taps.len() / 2;
    let (w, h) = (img.width(), img.height());

    // horizontal pass
    let mut mid = vec![S::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (k, &t) in taps.iter().enumerate() {
                let sx = x as isize + k as isize - radius as isize;
                acc = acc + t * real::<S>(img.get_clamped(sx, y as isize) as f64);
            }
            mid[y * w + x] = acc;
        }
    }

    // vertical pass
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (k, &t) in taps.iter().enumerate() {
                let sy = (y as isize + k as isize - radius as isize).clamp(0, h as isize - 1);
                acc = acc + t * mid[sy as usize * w + x];
            }
            data[y * w + x] = acc
                .round()
                .max(S::zero())
                .min(real(255.0))
                .to_u8()
                .expect("clamped to [0,255]");
        }
    }
    GrayImage::new(w, h, data)
}

/// Base luminance quantization table (ITU-T T.81 Annex K), row-major.
const LUMA_QUANT_BASE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quantization table at a quality factor, using the usual scaling rule:
/// `scale = 5000/q` below 50, `200 - 2q` otherwise, entries clamped to [1, 255].
pub fn quant_table(quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut table = [0u16; 64];
    for (dst, &base) in table.iter_mut().zip(LUMA_QUANT_BASE.iter()) {
        let scaled = (base as f64 * scale / 100.0).round();
        *dst = scaled.clamp(1.0, 255.0) as u16;
    }
    table
}

/// Orthonormal 8-point DCT-II basis, `BASIS[u][x]`.
fn dct_basis<S: Real>() -> [[S; 8]; 8] {
    let mut basis = [[S::zero(); 8]; 8];
    for (u, row) in basis.iter_mut().enumerate() {
        let norm = if u == 0 {
            real::<S>(1.0 / 8.0f64.sqrt())
        } else {
            real::<S>((2.0 / 8.0f64).sqrt())
        };
        for (x, b) in row.iter_mut().enumerate() {
            let angle = ((2 * x + 1) as f64) * (u as f64) * std::f64::consts::PI / 16.0;
            *b = norm * real::<S>(angle.cos());
        }
    }
    basis
}

/// JPEG artifact simulation: per 8x8 block, forward DCT, quantize with the
/// quality-scaled luminance table, dequantize, inverse DCT. Reproduces
/// blockiness and high-frequency loss without entropy coding. Dimensions
/// are padded to multiples of 8 by edge replication and cropped back.
pub fn jpeg_roundtrip<S: Real>(img: &GrayImage, quality: u8) -> Result<GrayImage> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Domain(format!(
            "jpeg quality {quality} outside [1, 100]"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let pw = w.div_ceil(8) * 8;
    let ph = h.div_ceil(8) * 8;

    let mut padded = vec![S::zero(); pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            let v = img.get(x.min(w - 1), y.min(h - 1));
            // level shift to center coefficients around zero
            padded[y * pw + x] = real::<S>(v as f64 - 128.0);
        }
    }

    let basis = dct_basis::<S>();
    let table = quant_table(quality);
    let mut block = [[S::zero(); 8]; 8];
    let mut coef = [[S::zero(); 8]; 8];
    let mut tmp = [[S::zero(); 8]; 8];

    for by in (0..ph).step_by(8) {
        for bx in (0..pw).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y][x] = padded[(by + y) * pw + bx + x];
                }
            }
            // forward: coef = B * block * B^T
            mat8(&basis, &block, &mut tmp, false);
            mat8_t(&tmp, &basis, &mut coef);
            // quantize / dequantize
            for u in 0..8 {
                for v in 0..8 {
                    let q = real::<S>(table[u * 8 + v] as f64);
                    coef[u][v] = (coef[u][v] / q).round() * q;
                }
            }
            // inverse: block = B^T * coef * B
            mat8(&basis, &coef, &mut tmp, true);
            mat8_b(&tmp, &basis, &mut block);
            for y in 0..8 {
                for x in 0..8 {
                    padded[(by + y) * pw + bx + x] = block[y][x];
                }
            }
        }
    }

    let mut data = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = (padded[y * pw + x] + real(128.0)).round();
            data[y * w + x] = v
                .max(S::zero())
                .min(real(255.0))
                .to_u8()
                .expect("clamped to [0,255]");
        }
    }
    GrayImage::new(w, h, data)
}

/// `out = B * m` (or `B^T * m` when `transpose`).
fn mat8<S: Real>(b: &[[S; 8]; 8], m: &[[S; 8]; 8], out: &mut [[S; 8]; 8], transpose: bool) {
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = S::zero();
            for k in 0..8 {
                let bik = if transpose { b[k][i] } else { b[i][k] };
                acc = acc + bik * m[k][j];
            }
            out[i][j] = acc;
        }
    }
}

/// `out = m * B^T`.
fn mat8_t<S: Real>(m: &[[S; 8]; 8], b: &[[S; 8]; 8], out: &mut [[S; 8]; 8]) {
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = S::zero();
            for k in 0..8 {
                acc = acc + m[i][k] * b[j][k];
            }
            out[i][j] = acc;
        }
    }
}

/// `out = m * B`.
fn mat8_b<S: Real>(m: &[[S; 8]; 8], b: &[[S; 8]; 8], out: &mut [[S; 8]; 8]) {
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = S::zero();
            for k in 0..8 {
                acc = acc + m[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut state = seed;
        GrayImage::from_fn(w, h, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 56) as u8
        })
    }

    #[test]
    fn light_reduce_arithmetic() {
        let img = GrayImage::constant(8, 8, 200);
        let out = light_reduce(&img, 50.0f64).unwrap();
        assert!(out.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn light_reduce_zero_is_identity() {
        let img = lcg_image(16, 16, 7);
        assert_eq!(light_reduce(&img, 0.0f64).unwrap(), img);
    }

    #[test]
    fn light_reduce_rejects_out_of_range() {
        let img = GrayImage::constant(8, 8, 10);
        assert!(light_reduce(&img, 100.0f64).is_err());
        assert!(light_reduce(&img, -1.0f64).is_err());
    }

    #[test]
    fn light_reduce_mean_ratio() {
        // mid-range image, no pixels near 0, so rounding noise stays small
        let img = GrayImage::from_fn(32, 32, |x, y| (80 + ((x * 31 + y * 17) % 120)) as u8);
        let out = light_reduce(&img, 30.0f64).unwrap();
        let ratio = out.mean_intensity::<f64>() / img.mean_intensity::<f64>();
        assert!((ratio - 0.70).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn light_reduce_monotone_in_amount() {
        let img = lcg_image(24, 24, 21);
        let mut prev = img.mean_intensity::<f64>();
        for step in 1..=19 {
            let amount = 5.0 * step as f64;
            let mean = light_reduce(&img, amount).unwrap().mean_intensity::<f64>();
            assert!(mean <= prev, "amount {amount}: {mean} > {prev}");
            prev = mean;
        }
    }

    #[test]
    fn blur_preserves_constant_image() {
        let img = GrayImage::constant(16, 16, 77);
        for sigma in [0.5f64, 1.0, 2.0, 4.5] {
            assert_eq!(gaussian_blur(&img, sigma).unwrap(), img);
        }
    }

    #[test]
    fn blur_preserves_mean_within_half_gray_level() {
        let img = lcg_image(48, 48, 3);
        let out = gaussian_blur(&img, 2.0f64).unwrap();
        let before = img.mean_intensity::<f64>();
        let after = out.mean_intensity::<f64>();
        assert!((before - after).abs() <= 0.5, "{before} vs {after}");
    }

    #[test]
    fn blur_rejects_nonpositive_sigma() {
        let img = GrayImage::constant(8, 8, 1);
        assert!(gaussian_blur(&img, 0.0f64).is_err());
        assert!(gaussian_blur(&img, -2.0f64).is_err());
    }

    /// Brute-force 2-D convolution with the same kernel and clamp-to-edge
    /// border; independent of the separable implementation path.
    fn blur_oracle(img: &GrayImage, sigma: f64) -> Vec<u8> {
        let taps = gaussian_kernel::<f64>(sigma);
        let radius = taps.len() / 2;
        let mut out = Vec::with_capacity(img.width() * img.height());
        for y in 0..img.height() as isize {
            for x in 0..img.width() as isize {
                let mut acc = 0.0;
                for (ky, &ty) in taps.iter().enumerate() {
                    for (kx, &tx) in taps.iter().enumerate() {
                        let sx = x + kx as isize - radius as isize;
                        let sy = y + ky as isize - radius as isize;
                        acc += ty * tx * img.get_clamped(sx, sy) as f64;
                    }
                }
                out.push((acc.round().clamp(0.0, 255.0)) as u8);
            }
        }
        out
    }

    #[test]
    fn blur_matches_direct_convolution_oracle() {
        let mut img = lcg_image(9, 9, 11);
        // plant a bright pixel so the test also covers the impulse shape
        let mut data = img.data().to_vec();
        data[4 * 9 + 4] = 255;
        img = GrayImage::new(9, 9, data).unwrap();

        let direct = blur_oracle(&img, 1.0);
        let separable = gaussian_blur(&img, 1.0f64).unwrap();
        for (i, (&a, &b)) in separable.data().iter().zip(direct.iter()).enumerate() {
            assert!(
                (a as i16 - b as i16).abs() <= 1,
                "pixel {i}: separable {a} vs direct {b}"
            );
        }
    }

    #[test]
    fn blur_spreads_bright_pixel() {
        let mut data = vec![10u8; 81];
        data[4 * 9 + 4] = 250;
        let img = GrayImage::new(9, 9, data).unwrap();
        let out = gaussian_blur(&img, 1.0f64).unwrap();
        assert!(out.get(4, 4) < 250, "center must lose energy");
        let far = out.get(0, 0);
        for (dx, dy) in [(-1isize, -1isize), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let v = out.get((4 + dx) as usize, (4 + dy) as usize);
            assert!(v > far, "neighborhood {v} should exceed far field {far}");
        }
    }

    #[test]
    fn quant_table_extremes() {
        let q100 = quant_table(100);
        assert!(q100.iter().all(|&t| t == 1));
        let q1 = quant_table(1);
        assert!(q1.iter().all(|&t| t == 255));
    }

    #[test]
    fn jpeg_constant_image_stays_constant() {
        // Only the DC coefficient is nonzero, so the output is uniform and
        // its level is off by at most step/2 (in DC units) / 8 per pixel.
        let img = GrayImage::constant(16, 16, 93);
        for quality in [1u8, 10, 50, 90, 100] {
            let out = jpeg_roundtrip::<f64>(&img, quality).unwrap();
            let v = out.data()[0];
            assert!(out.data().iter().all(|&p| p == v), "quality {quality}");
            let bound = quant_table(quality)[0] as f64 / 16.0 + 0.5;
            assert!(
                (v as f64 - 93.0).abs() <= bound,
                "quality {quality}: {v} vs 93, bound {bound}"
            );
        }
        assert_eq!(jpeg_roundtrip::<f64>(&img, 100).unwrap(), img);
    }

    #[test]
    fn jpeg_quality_100_bound() {
        for seed in 1..=8u64 {
            let img = lcg_image(64, 64, seed);
            let out = jpeg_roundtrip::<f64>(&img, 100).unwrap();
            for (i, (&a, &b)) in img.data().iter().zip(out.data().iter()).enumerate() {
                assert!(
                    (a as i16 - b as i16).abs() <= 2,
                    "seed {seed} pixel {i}: {a} -> {b}"
                );
            }
        }
    }

    #[test]
    fn jpeg_rejects_bad_quality() {
        let img = GrayImage::constant(8, 8, 5);
        assert!(jpeg_roundtrip::<f64>(&img, 0).is_err());
        assert!(jpeg_roundtrip::<f64>(&img, 101).is_err());
    }

    #[test]
    fn jpeg_pads_odd_dimensions() {
        let img = lcg_image(13, 10, 5);
        let out = jpeg_roundtrip::<f64>(&img, 30).unwrap();
        assert_eq!((out.width(), out.height()), (13, 10));
    }

    #[test]
    fn transforms_preserve_dimensions() {
        let img = lcg_image(20, 12, 9);
        let ladders = Ladders::default();
        for kind in TransformKind::ALL {
            for &amount in ladders.ladder(kind) {
                let out = apply_transform::<f64>(&img, kind, amount).unwrap();
                assert_eq!((out.width(), out.height()), (20, 12));
            }
        }
    }

    #[test]
    fn default_ladders_validate() {
        let ladders = Ladders::default();
        ladders.validate().unwrap();
        assert_eq!(ladders.light.len(), 13);
        assert_eq!(ladders.jpeg.len(), 13);
        assert_eq!(ladders.blur.len(), 9);
        assert_eq!(ladders.condition_count(), 35);
    }

    #[test]
    fn ladder_validation_rejects_wrong_sizes() {
        let mut ladders = Ladders::default();
        ladders.blur.push(5.0);
        assert!(ladders.validate().is_err());
    }
}
