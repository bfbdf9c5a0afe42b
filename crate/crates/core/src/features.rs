//! Global photometric features for a (reference, target) image pair.
//!
//! The triple F = [f_L, f_B, f_J] summarizes light change (mean-intensity
//! ratio), blur change (re-blur index ratio), and JPEG artifact level
//! (blockiness / zero-crossing score of the target).

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::{real, Real};

/// Feature triple for one image pair. `f_l` and `f_b` are ratios (> 0,
/// exactly 1 for an identity pair); `f_j` is the quality score of the
/// target, unbounded in sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector<S: Real> {
    pub f_l: S,
    pub f_b: S,
    pub f_j: S,
}

impl<S: Real> FeatureVector<S> {
    pub fn to_array(self) -> [S; 3] {
        [self.f_l, self.f_b, self.f_j]
    }

    pub const COMPONENT_NAMES: [&'static str; 3] = ["f_L", "f_B", "f_J"];
}

/// Constants of the quality score S = alpha + beta * B^gb * A^ga * Z^gz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WangParams<S: Real> {
    pub alpha: S,
    pub beta: S,
    pub gamma_b: S,
    pub gamma_a: S,
    pub gamma_z: S,
}

impl<S: Real> Default for WangParams<S> {
    fn default() -> Self {
        Self {
            alpha: real(-245.9),
            beta: real(261.9),
            gamma_b: real(-0.0240),
            gamma_a: real(0.0160),
            gamma_z: real(0.0064),
        }
    }
}

/// Tunables of the extraction stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig<S: Real> {
    pub wang: WangParams<S>,
    /// Length of the uniform re-blur kernel; odd, >= 3.
    pub blur_kernel_len: usize,
    /// When set, f_J = S(tgt) / S(ref) instead of the plain target score.
    pub normalized_fj: bool,
}

impl<S: Real> Default for FeatureConfig<S> {
    fn default() -> Self {
        Self {
            wang: WangParams::default(),
            blur_kernel_len: 9,
            normalized_fj: false,
        }
    }
}

/// Ratio of target mean intensity to reference mean intensity. Lower
/// values mean stronger light reduction in the target.
pub fn light_feature<S: Real>(reference: &GrayImage, target: &GrayImage) -> Result<S> {
    let ref_mean: S = reference.mean_intensity();
    if !(ref_mean > S::zero()) {
        return Err(Error::Degenerate(
            "light feature needs a reference with nonzero mean".into(),
        ));
    }
    Ok(target.mean_intensity::<S>() / ref_mean)
}

/// Re-blur blur estimate in [0, 1]; larger means blurrier.
///
/// The image is smoothed with a strong uniform 1-D kernel per direction;
/// wherever smoothing reduces the absolute first difference, that loss is
/// credited to remaining sharpness. An image that the kernel barely
/// changes was already blurred.
pub fn perceptual_blur_index<S: Real>(img: &GrayImage, kernel_len: usize) -> Result<S> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::Domain(format!(
            "blur index needs at least 3x3 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if kernel_len < 3 || kernel_len % 2 == 0 {
        return Err(Error::Domain(format!(
            "re-blur kernel length {kernel_len} must be odd and >= 3"
        )));
    }
    let horizontal = directional_blur_index::<S>(img, kernel_len, true);
    let vertical = directional_blur_index::<S>(img, kernel_len, false);
    Ok(horizontal.max(vertical))
}

/// One direction of the re-blur comparison. Zero gradient sum maps to 0.
fn directional_blur_index<S: Real>(img: &GrayImage, kernel_len: usize, horizontal: bool) -> S {
    let (w, h) = (img.width(), img.height());
    let radius = (kernel_len / 2) as isize;
    let inv_len = S::one() / real::<S>(kernel_len as f64);

    // uniform 1-D smoothing along the measured direction, clamp-to-edge
    let mut smooth = vec![S::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for k in -radius..=radius {
                let v = if horizontal {
                    img.get_clamped(x as isize + k, y as isize)
                } else {
                    img.get_clamped(x as isize, y as isize + k)
                };
                acc = acc + real::<S>(v as f64);
            }
            smooth[y * w + x] = acc * inv_len;
        }
    }

    let (dx, dy) = if horizontal { (1usize, 0usize) } else { (0, 1) };
    let mut grad_sum = S::zero();
    let mut lost = S::zero();
    for y in dy..h {
        for x in dx..w {
            let d_orig = real::<S>(
                (img.get(x, y) as f64 - img.get(x - dx, y - dy) as f64).abs(),
            );
            let d_smooth = (smooth[y * w + x] - smooth[(y - dy) * w + x - dx]).abs();
            grad_sum += d_orig;
            lost += (d_orig - d_smooth).max(S::zero());
        }
    }
    if grad_sum > S::zero() {
        (grad_sum - lost) / grad_sum
    } else {
        S::zero()
    }
}

/// Ratio of target blur index to reference blur index; > 1 when the
/// target is blurrier than the reference.
pub fn blur_feature<S: Real>(
    reference: &GrayImage,
    target: &GrayImage,
    kernel_len: usize,
) -> Result<S> {
    let ref_index = perceptual_blur_index::<S>(reference, kernel_len)?;
    if !(ref_index > S::zero()) {
        return Err(Error::Degenerate(
            "blur feature needs a reference with nonzero gradient".into(),
        ));
    }
    Ok(perceptual_blur_index::<S>(target, kernel_len)? / ref_index)
}

/// Per-direction statistics of the differential signal d = x[i+1] - x[i]:
/// blockiness (mean |d| on 8-pixel block boundaries), overall activity,
/// and zero-crossing rate.
struct DiffStats<S> {
    blockiness: S,
    activity: S,
    zero_crossings: S,
}

fn directional_diff_stats<S: Real>(img: &GrayImage, horizontal: bool) -> DiffStats<S> {
    let (w, h) = (img.width(), img.height());
    // `lines` run across the difference direction, `len` along it
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };

    let mut abs_total = 0.0f64;
    let mut boundary_total = 0.0f64;
    let mut boundary_count = 0u64;
    let mut crossings = 0u64;

    let mut d = vec![0.0f64; len - 1];
    for line in 0..lines {
        for i in 0..len - 1 {
            let (a, b) = if horizontal {
                (img.get(i, line), img.get(i + 1, line))
            } else {
                (img.get(line, i), img.get(line, i + 1))
            };
            d[i] = b as f64 - a as f64;
        }
        for (i, &v) in d.iter().enumerate() {
            abs_total += v.abs();
            // boundary between sample 8k-1 and 8k (0-indexed)
            if (i + 1) % 8 == 0 {
                boundary_total += v.abs();
                boundary_count += 1;
            }
        }
        for pair in d.windows(2) {
            if pair[0] * pair[1] < 0.0 {
                crossings += 1;
            }
        }
    }

    let mean_abs = abs_total / (lines * (len - 1)) as f64;
    let blockiness = if boundary_count > 0 {
        boundary_total / boundary_count as f64
    } else {
        0.0
    };
    let activity = (8.0 * mean_abs - blockiness) / 7.0;
    let zero_rate = crossings as f64 / (lines * (len - 2)) as f64;
    DiffStats {
        blockiness: real(blockiness),
        activity: real(activity),
        zero_crossings: real(zero_rate),
    }
}

/// Reference-free JPEG quality score. Stronger compression lowers the
/// score: in-block smoothing removes activity and zero-crossings faster
/// than block-boundary discontinuities.
pub fn jpeg_quality_index<S: Real>(img: &GrayImage, params: &WangParams<S>) -> Result<S> {
    if img.width() < 9 || img.height() < 9 {
        return Err(Error::Domain(format!(
            "jpeg quality index needs at least 9x9 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let hor = directional_diff_stats::<S>(img, true);
    let ver = directional_diff_stats::<S>(img, false);
    let half = real::<S>(0.5);
    let b = (hor.blockiness + ver.blockiness) * half;
    let a = (hor.activity + ver.activity) * half;
    let z = (hor.zero_crossings + ver.zero_crossings) * half;

    // degenerate differential: any non-positive factor would make the
    // power product infinite or undefined, so fall back to the offset
    if !(b > S::zero() && a > S::zero() && z > S::zero()) {
        return Ok(params.alpha);
    }
    Ok(params.alpha
        + params.beta
            * b.powf(params.gamma_b)
            * a.powf(params.gamma_a)
            * z.powf(params.gamma_z))
}

/// Computes F = [f_L, f_B, f_J] for a same-size image pair.
pub fn extract_features<S: Real>(
    reference: &GrayImage,
    target: &GrayImage,
    config: &FeatureConfig<S>,
) -> Result<FeatureVector<S>> {
    if reference.width() != target.width() || reference.height() != target.height() {
        return Err(Error::DimensionMismatch {
            ref_width: reference.width(),
            ref_height: reference.height(),
            tgt_width: target.width(),
            tgt_height: target.height(),
        });
    }
    let f_l = light_feature(reference, target)?;
    let f_b = blur_feature(reference, target, config.blur_kernel_len)?;
    let mut f_j = jpeg_quality_index(target, &config.wang)?;
    if config.normalized_fj {
        let ref_score = jpeg_quality_index(reference, &config.wang)?;
        if ref_score == S::zero() {
            return Err(Error::Degenerate(
                "normalized f_J needs a reference with nonzero quality score".into(),
            ));
        }
        f_j = f_j / ref_score;
    }
    Ok(FeatureVector { f_l, f_b, f_j })
}
