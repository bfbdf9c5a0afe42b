//! Keypoint detection: two built-in detectors (Harris corners and
//! difference-of-Gaussians extrema) and an adapter that runs an external
//! detector executable against image files.

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::transforms::gaussian_kernel;
use crate::{real, Real};

/// One detected interest point. `scale` is the characteristic radius in
/// pixels; `score` is the raw detector response (0 for external results).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint<S: Real> {
    pub x: S,
    pub y: S,
    pub scale: S,
    pub score: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorSource {
    Builtin,
    External,
}

/// Name plus origin of a detector; names must be unique within a run and
/// order lexicographically (the tie-break order of the selection stage).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectorId {
    pub name: String,
    pub source: DetectorSource,
}

impl std::fmt::Display for DetectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisParams<S: Real> {
    /// Gaussian window used to aggregate the gradient products.
    pub window_sigma: S,
    /// Trace weight of the corner response.
    pub k: S,
    /// Response threshold as a fraction of the maximum response.
    pub rel_threshold: S,
}

impl<S: Real> Default for HarrisParams<S> {
    fn default() -> Self {
        Self {
            window_sigma: real(1.5),
            k: real(0.04),
            rel_threshold: real(0.01),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DogParams<S: Real> {
    /// Strictly increasing blur ladder; at least 4 entries so at least
    /// one difference level has neighbors above and below.
    pub sigmas: Vec<S>,
    /// Contrast threshold as a fraction of the maximum |DoG| response.
    pub rel_threshold: S,
}

impl<S: Real> Default for DogParams<S> {
    fn default() -> Self {
        Self {
            sigmas: vec![real(1.0), real(1.6), real(2.56), real(4.096), real(6.5536)],
            rel_threshold: real(0.05),
        }
    }
}

/// Separable Gaussian blur over a real-valued field (clamp-to-edge), used
/// by both built-in detectors.
fn blur_field<S: Real>(field: &[S], w: usize, h: usize, sigma: S) -> Vec<S> {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let mut mid = vec![S::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (k, &t) in taps.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1);
                acc += t * field[y * w + sx as usize];
            }
            mid[y * w + x] = acc;
        }
    }
    let mut out = vec![S::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (k, &t) in taps.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1);
                acc += t * mid[sy as usize * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn to_field<S: Real>(img: &GrayImage) -> Vec<S> {
    img.data().iter().map(|&v| real::<S>(v as f64)).collect()
}

/// Harris corners: Sobel gradients, Gaussian-windowed second-moment
/// matrix, response det - k trace^2, 3x3 non-maximum suppression, and a
/// threshold relative to the strongest response. Output is ordered by
/// descending score, then (y, x).
pub fn detect_harris<S: Real>(img: &GrayImage, params: &HarrisParams<S>) -> Vec<Keypoint<S>> {
    let (w, h) = (img.width(), img.height());
    let eighth = real::<S>(1.0 / 8.0);
    let two = real::<S>(2.0);

    let mut ixx = vec![S::zero(); w * h];
    let mut iyy = vec![S::zero(); w * h];
    let mut ixy = vec![S::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| real::<S>(img.get_clamped(x + dx, y + dy) as f64);
            let gx = (p(1, -1) + two * p(1, 0) + p(1, 1) - p(-1, -1) - two * p(-1, 0) - p(-1, 1))
                * eighth;
            let gy = (p(-1, 1) + two * p(0, 1) + p(1, 1) - p(-1, -1) - two * p(0, -1) - p(1, -1))
                * eighth;
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let sxx = blur_field(&ixx, w, h, params.window_sigma);
    let syy = blur_field(&iyy, w, h, params.window_sigma);
    let sxy = blur_field(&ixy, w, h, params.window_sigma);

    let mut response = vec![S::zero(); w * h];
    let mut max_response = S::zero();
    for i in 0..w * h {
        let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
        let trace = sxx[i] + syy[i];
        let r = det - params.k * trace * trace;
        response[i] = r;
        max_response = max_response.max(r);
    }
    if !(max_response > S::zero()) {
        return Vec::new();
    }
    let threshold = params.rel_threshold * max_response;

    let mut kps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let r = response[y * w + x];
            if r <= threshold {
                continue;
            }
            let mut is_peak = true;
            'nms: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let ny = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    if (nx, ny) != (x, y) && response[ny * w + nx] >= r {
                        is_peak = false;
                        break 'nms;
                    }
                }
            }
            if is_peak {
                kps.push(Keypoint {
                    x: real(x as f64),
                    y: real(y as f64),
                    scale: params.window_sigma,
                    score: r,
                });
            }
        }
    }
    kps.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite responses")
            .then(a.y.partial_cmp(&b.y).expect("finite coordinates"))
            .then(a.x.partial_cmp(&b.x).expect("finite coordinates"))
    });
    kps
}

/// Difference-of-Gaussians extrema: blur the image at each ladder sigma,
/// difference adjacent levels, and keep points that are strict extrema in
/// their 3x3x3 neighborhood with |response| above a relative contrast
/// threshold. Keypoint scale is the sigma of its difference level.
pub fn detect_dog<S: Real>(img: &GrayImage, params: &DogParams<S>) -> Result<Vec<Keypoint<S>>> {
    if params.sigmas.len() < 4 {
        return Err(Error::Domain(format!(
            "difference-of-Gaussians needs at least 4 sigmas, got {}",
            params.sigmas.len()
        )));
    }
    for pair in params.sigmas.windows(2) {
        if !(pair[0] > S::zero() && pair[1] > pair[0]) {
            return Err(Error::Domain(
                "difference-of-Gaussians sigmas must be positive and strictly increasing".into(),
            ));
        }
    }
    let (w, h) = (img.width(), img.height());
    let base = to_field::<S>(img);
    let pyramid: Vec<Vec<S>> = params
        .sigmas
        .iter()
        .map(|&s| blur_field(&base, w, h, s))
        .collect();
    let dog: Vec<Vec<S>> = pyramid
        .windows(2)
        .map(|pair| (0..w * h).map(|i| pair[1][i] - pair[0][i]).collect())
        .collect();

    let mut max_abs = S::zero();
    for level in &dog {
        for &v in level {
            max_abs = max_abs.max(v.abs());
        }
    }
    if !(max_abs > S::zero()) {
        return Ok(Vec::new());
    }
    let threshold = params.rel_threshold * max_abs;

    let mut kps = Vec::new();
    for level in 1..dog.len() - 1 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let v = dog[level][y * w + x];
                if v.abs() <= threshold {
                    continue;
                }
                let mut is_max = true;
                let mut is_min = true;
                'cube: for dl in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dl == 0 && dy == 0 && dx == 0 {
                                continue;
                            }
                            let n = dog[(level as isize + dl) as usize]
                                [(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                            if n >= v {
                                is_max = false;
                            }
                            if n <= v {
                                is_min = false;
                            }
                            if !is_max && !is_min {
                                break 'cube;
                            }
                        }
                    }
                }
                if is_max || is_min {
                    kps.push(Keypoint {
                        x: real(x as f64),
                        y: real(y as f64),
                        scale: params.sigmas[level],
                        score: v,
                    });
                }
            }
        }
    }
    kps.sort_by(|a, b| {
        b.score
            .abs()
            .partial_cmp(&a.score.abs())
            .expect("finite responses")
            .then(a.y.partial_cmp(&b.y).expect("finite coordinates"))
            .then(a.x.partial_cmp(&b.x).expect("finite coordinates"))
            .then(a.scale.partial_cmp(&b.scale).expect("finite scales"))
    });
    Ok(kps)
}

/// Parses the adapter keypoint format: first line is the count N, then
/// exactly N lines of `x y scale`.
pub fn parse_keypoint_file<S: Real>(text: &str, origin: &str) -> Result<Vec<Keypoint<S>>> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines();
    let count_line = lines.next().ok_or_else(|| fail(1, "empty keypoint file".into()))?;
    let count: usize = count_line
        .trim()
        .parse()
        .map_err(|_| fail(1, format!("bad keypoint count {count_line:?}")))?;
    let mut kps = Vec::with_capacity(count);
    for n in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| fail(n + 2, format!("expected {count} keypoint rows, found {n}")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(fail(
                n + 2,
                format!("expected `x y scale`, got {} fields", parts.len()),
            ));
        }
        let mut vals = [S::zero(); 3];
        for (v, tok) in vals.iter_mut().zip(&parts) {
            *v = tok
                .parse::<S>()
                .map_err(|_| fail(n + 2, format!("bad number {tok:?}")))?;
        }
        if !(vals[2] > S::zero()) {
            return Err(fail(n + 2, format!("scale {} must be > 0", vals[2])));
        }
        kps.push(Keypoint {
            x: vals[0],
            y: vals[1],
            scale: vals[2],
            score: S::zero(),
        });
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(fail(
            count + 2,
            format!("trailing content after {count} keypoint rows: {extra:?}"),
        ));
    }
    Ok(kps)
}

/// Runs an external detector executable. The template is split on
/// whitespace (no shell); `{input}` and `{output}` inside any token are
/// replaced by the image path and a temporary result path.
pub fn run_external_detector<S: Real>(
    name: &str,
    cmd_template: &str,
    image_path: &Path,
    timeout: Duration,
) -> Result<Vec<Keypoint<S>>> {
    if !cmd_template.contains("{input}") || !cmd_template.contains("{output}") {
        return Err(Error::External {
            name: name.to_string(),
            message: format!("command template {cmd_template:?} must contain {{input}} and {{output}}"),
        });
    }
    let out_file = tempfile::Builder::new()
        .prefix("dpsel-kps-")
        .suffix(".txt")
        .tempfile()
        .map_err(|e| Error::io(Path::new("tempfile"), e))?;
    let out_path = out_file.path().to_path_buf();

    let tokens: Vec<String> = cmd_template
        .split_whitespace()
        .map(|t| {
            t.replace("{input}", &image_path.display().to_string())
                .replace("{output}", &out_path.display().to_string())
        })
        .collect();

    let mut child = Command::new(&tokens[0])
        .args(&tokens[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::External {
            name: name.to_string(),
            message: format!("failed to spawn {:?}: {e}", tokens[0]),
        })?;

    let started = Instant::now();
    let status = loop {
        match child.try_wait().map_err(|e| Error::External {
            name: name.to_string(),
            message: format!("wait failed: {e}"),
        })? {
            Some(status) => break status,
            None if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::ExternalTimeout {
                    name: name.to_string(),
                    timeout_secs: timeout.as_secs_f64(),
                });
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };

    let mut stderr = String::new();
    if let Some(mut pipe) = child.stderr.take() {
        use std::io::Read;
        let _ = pipe.read_to_string(&mut stderr);
    }
    if !status.success() {
        return Err(Error::External {
            name: name.to_string(),
            message: format!("exit status {status}: {}", stderr.trim()),
        });
    }
    let text = std::fs::read_to_string(&out_path).map_err(|e| Error::io(&out_path, e))?;
    parse_keypoint_file(&text, &out_path.display().to_string())
}

/// Detector configuration: built-in parameters or an external command.
#[derive(Clone, Debug, PartialEq)]
pub enum Detector<S: Real> {
    Harris(HarrisParams<S>),
    Dog(DogParams<S>),
    External { cmd_template: String, timeout: Duration },
}

/// A detector with its identity, ready to run on images.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedDetector<S: Real> {
    pub id: DetectorId,
    pub detector: Detector<S>,
}

impl<S: Real> NamedDetector<S> {
    pub fn harris(name: &str, params: HarrisParams<S>) -> Self {
        Self {
            id: DetectorId {
                name: name.to_string(),
                source: DetectorSource::Builtin,
            },
            detector: Detector::Harris(params),
        }
    }

    pub fn dog(name: &str, params: DogParams<S>) -> Self {
        Self {
            id: DetectorId {
                name: name.to_string(),
                source: DetectorSource::Builtin,
            },
            detector: Detector::Dog(params),
        }
    }

    pub fn external(name: &str, cmd_template: &str, timeout: Duration) -> Self {
        Self {
            id: DetectorId {
                name: name.to_string(),
                source: DetectorSource::External,
            },
            detector: Detector::External {
                cmd_template: cmd_template.to_string(),
                timeout,
            },
        }
    }

    /// Runs the detector. External detectors consume the on-disk file at
    /// `path` when given, otherwise the image is written to a temporary
    /// file first.
    pub fn detect(&self, img: &GrayImage, path: Option<&Path>) -> Result<Vec<Keypoint<S>>> {
        match &self.detector {
            Detector::Harris(params) => Ok(detect_harris(img, params)),
            Detector::Dog(params) => detect_dog(img, params),
            Detector::External { cmd_template, timeout } => match path {
                Some(p) => run_external_detector(&self.id.name, cmd_template, p, *timeout),
                None => {
                    let mut tmp = tempfile::Builder::new()
                        .prefix("dpsel-img-")
                        .suffix(".pgm")
                        .tempfile()
                        .map_err(|e| Error::io(Path::new("tempfile"), e))?;
                    tmp.write_all(&crate::image::save_image(img))
                        .map_err(|e| Error::io(tmp.path(), e))?;
                    tmp.flush().map_err(|e| Error::io(tmp.path(), e))?;
                    run_external_detector(&self.id.name, cmd_template, tmp.path(), *timeout)
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_scene;
    use crate::transforms::light_reduce;

    #[test]
    fn harris_ignores_constant_images() {
        let img = GrayImage::constant(32, 32, 128);
        assert!(detect_harris::<f64>(&img, &HarrisParams::default()).is_empty());
    }

    #[test]
    fn harris_finds_the_four_square_corners() {
        let img = GrayImage::from_fn(32, 32, |x, y| {
            if (10..22).contains(&x) && (10..22).contains(&y) {
                255
            } else {
                0
            }
        });
        let kps = detect_harris::<f64>(&img, &HarrisParams::default());
        assert_eq!(kps.len(), 4, "got {kps:?}");
        for (cx, cy) in [(10.0, 10.0), (21.0, 10.0), (10.0, 21.0), (21.0, 21.0)] {
            let hit = kps
                .iter()
                .any(|k| ((k.x - cx).powi(2) + (k.y - cy).powi(2)).sqrt() <= 2.0);
            assert!(hit, "no keypoint near corner ({cx},{cy}): {kps:?}");
        }
    }

    #[test]
    fn harris_is_deterministic() {
        let img = synth_scene(64, 64, 3);
        let a = detect_harris::<f64>(&img, &HarrisParams::default());
        let b = detect_harris::<f64>(&img, &HarrisParams::default());
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn harris_keypoints_stay_in_bounds_and_sorted() {
        let img = synth_scene(80, 60, 4);
        let kps = detect_harris::<f64>(&img, &HarrisParams::default());
        for k in &kps {
            assert!(k.x >= 0.0 && k.x < 80.0);
            assert!(k.y >= 0.0 && k.y < 60.0);
            assert!(k.scale > 0.0);
        }
        for pair in kps.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
    }

    /// Dense re-computation of the Harris response with direct 2-D window
    /// convolution; independent of the separable blur path.
    fn harris_response_oracle(img: &GrayImage, params: &HarrisParams<f64>) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let taps = gaussian_kernel::<f64>(params.window_sigma);
        let radius = (taps.len() / 2) as isize;
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy) as f64;
                gx[y as usize * w + x as usize] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)
                    - p(-1, -1)
                    - 2.0 * p(-1, 0)
                    - p(-1, 1))
                    / 8.0;
                gy[y as usize * w + x as usize] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)
                    - p(-1, -1)
                    - 2.0 * p(0, -1)
                    - p(1, -1))
                    / 8.0;
            }
        }
        let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
        let mut response = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for (ky, &ty) in taps.iter().enumerate() {
                    for (kx, &tx) in taps.iter().enumerate() {
                        let sx = clamp(x + kx as isize - radius, w);
                        let sy = clamp(y + ky as isize - radius, h);
                        let weight = ty * tx;
                        let a = gx[sy * w + sx];
                        let b = gy[sy * w + sx];
                        sxx += weight * a * a;
                        syy += weight * b * b;
                        sxy += weight * a * b;
                    }
                }
                let det = sxx * syy - sxy * sxy;
                let trace = sxx + syy;
                response[y as usize * w + x as usize] = det - params.k * trace * trace;
            }
        }
        response
    }

    #[test]
    fn harris_keypoints_are_peaks_of_the_response_oracle() {
        let img = synth_scene(48, 48, 5);
        let params = HarrisParams::default();
        let kps = detect_harris::<f64>(&img, &params);
        assert!(!kps.is_empty());
        let oracle = harris_response_oracle(&img, &params);
        let max = oracle.iter().cloned().fold(f64::MIN, f64::max);
        for k in &kps {
            let (x, y) = (k.x as usize, k.y as usize);
            let v = oracle[y * 48 + x];
            assert!((v - k.score).abs() <= 1e-9 * max.abs().max(1.0), "score mismatch at ({x},{y})");
            assert!(v > params.rel_threshold * max * 0.999, "below threshold at ({x},{y})");
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (x as isize + dx).clamp(0, 47) as usize;
                    let ny = (y as isize + dy).clamp(0, 47) as usize;
                    if (nx, ny) != (x, y) {
                        assert!(oracle[ny * 48 + nx] < v, "not a peak at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn dog_ignores_constant_images() {
        let img = GrayImage::constant(32, 32, 100);
        assert!(detect_dog::<f64>(&img, &DogParams::default()).unwrap().is_empty());
    }

    fn blob_image() -> GrayImage {
        GrayImage::from_fn(48, 48, |x, y| {
            let dx = x as f64 - 24.0;
            let dy = y as f64 - 24.0;
            let v = 100.0 + 80.0 * (-(dx * dx + dy * dy) / (2.0 * 2.0 * 2.0)).exp();
            v.round() as u8
        })
    }

    #[test]
    fn dog_centers_on_a_blob() {
        let kps = detect_dog::<f64>(&blob_image(), &DogParams::default()).unwrap();
        assert!(!kps.is_empty());
        let top = &kps[0];
        let dist = ((top.x - 24.0).powi(2) + (top.y - 24.0).powi(2)).sqrt();
        assert!(dist <= 1.5, "top keypoint at ({}, {}) distance {dist}", top.x, top.y);
    }

    #[test]
    fn dog_top_location_survives_light_reduction() {
        let img = blob_image();
        let dark = light_reduce(&img, 50.0f64).unwrap();
        let params = DogParams::default();
        let bright_kps = detect_dog::<f64>(&img, &params).unwrap();
        let dark_kps = detect_dog::<f64>(&dark, &params).unwrap();
        assert!(!bright_kps.is_empty() && !dark_kps.is_empty());
        assert_eq!(bright_kps[0].x, dark_kps[0].x);
        assert_eq!(bright_kps[0].y, dark_kps[0].y);
    }

    #[test]
    fn dog_rejects_bad_sigma_ladders() {
        let img = GrayImage::constant(16, 16, 0);
        let too_few = DogParams {
            sigmas: vec![1.0, 2.0, 3.0],
            rel_threshold: 0.05,
        };
        assert!(detect_dog::<f64>(&img, &too_few).is_err());
        let not_increasing = DogParams {
            sigmas: vec![1.0, 2.0, 2.0, 3.0],
            rel_threshold: 0.05,
        };
        assert!(detect_dog::<f64>(&img, &not_increasing).is_err());
    }

    #[test]
    fn dog_scales_come_from_the_ladder() {
        let img = synth_scene(64, 64, 6);
        let params = DogParams::<f64>::default();
        let kps = detect_dog::<f64>(&img, &params).unwrap();
        assert!(!kps.is_empty());
        for k in &kps {
            assert!(params.sigmas.contains(&k.scale));
        }
    }

    #[test]
    fn keypoint_file_round_trip() {
        let kps = parse_keypoint_file::<f64>("2\n1.0 2.0 1.0\n3.0 4.0 2.0\n", "stub").unwrap();
        assert_eq!(kps.len(), 2);
        assert_eq!((kps[0].x, kps[0].y, kps[0].scale), (1.0, 2.0, 1.0));
        assert_eq!((kps[1].x, kps[1].y, kps[1].scale), (3.0, 4.0, 2.0));
        assert_eq!(kps[1].score, 0.0);
    }

    #[test]
    fn keypoint_file_count_mismatch_names_line() {
        let err = parse_keypoint_file::<f64>("3\n1 2 1\n3 4 2\n", "stub").unwrap_err();
        match err {
            // the missing third row would have been file line 4
            Error::Format { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_keypoint_file::<f64>("1\n1 2 1\n9 9 9\n", "stub").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }));
    }

    #[test]
    fn keypoint_file_rejects_bad_rows() {
        assert!(parse_keypoint_file::<f64>("1\n1 2\n", "stub").is_err());
        assert!(parse_keypoint_file::<f64>("1\n1 2 0\n", "stub").is_err());
        assert!(parse_keypoint_file::<f64>("x\n", "stub").is_err());
    }

    fn write_stub(dir: &Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("stub.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    #[test]
    fn external_stub_produces_keypoints() {
        let dir = tempfile::tempdir().unwrap();
        let stub = write_stub(dir.path(), "printf '2\\n1.0 2.0 1.0\\n3.0 4.0 2.0\\n' > \"$2\"");
        let img_path = dir.path().join("img.pgm");
        crate::image::save_image_file(&GrayImage::constant(16, 16, 0), &img_path).unwrap();
        let cmd = format!("{} {{input}} {{output}}", stub.display());
        let kps =
            run_external_detector::<f64>("stub", &cmd, &img_path, Duration::from_secs(5)).unwrap();
        assert_eq!(kps.len(), 2);
        assert_eq!((kps[0].x, kps[0].y), (1.0, 2.0));
    }

    #[test]
    fn external_failure_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let stub = write_stub(dir.path(), "echo boom >&2; exit 3");
        let img_path = dir.path().join("img.pgm");
        crate::image::save_image_file(&GrayImage::constant(16, 16, 0), &img_path).unwrap();
        let cmd = format!("{} {{input}} {{output}}", stub.display());
        let err = run_external_detector::<f64>("stub", &cmd, &img_path, Duration::from_secs(5))
            .unwrap_err();
        match err {
            Error::External { name, message } => {
                assert_eq!(name, "stub");
                assert!(message.contains("boom"), "stderr missing: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn external_timeout_kills_the_child() {
        let dir = tempfile::tempdir().unwrap();
        let stub = write_stub(dir.path(), "sleep 30");
        let img_path = dir.path().join("img.pgm");
        crate::image::save_image_file(&GrayImage::constant(16, 16, 0), &img_path).unwrap();
        let cmd = format!("{} {{input}} {{output}}", stub.display());
        let started = Instant::now();
        let err = run_external_detector::<f64>("stub", &cmd, &img_path, Duration::from_millis(200))
            .unwrap_err();
        assert!(matches!(err, Error::ExternalTimeout { .. }));
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn external_template_must_have_placeholders() {
        let err = run_external_detector::<f64>(
            "stub",
            "detector --in {input}",
            Path::new("x.pgm"),
            Duration::from_secs(1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::External { .. }));
    }
}
