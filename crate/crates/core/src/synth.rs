//! Seeded procedural test scenes.
//!
//! Scenes follow natural-image statistics: multi-octave value noise with
//! amplitude growing sub-linearly in wavelength, a few hard-edged patches
//! for corner structure, and a fixed-amplitude fine grain. Keeping enough
//! mid and fine scale contrast matters: a field dominated by its coarsest
//! octave flattens the blur response before the strongest radii, and the
//! grain is what block compression quantizes away first. The grain
//! amplitude is the same for every scene so that block-compression
//! statistics respond to quality consistently across a corpus. Intensities
//! stay inside [25, 230] so light reduction and blur never clip.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Adds one value-noise octave with lattice cell size `cell` and the
/// given amplitude.
fn add_octave(field: &mut [f64], width: usize, height: usize, cell: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let nx = (width as f64 / cell).ceil() as usize + 1;
    let ny = (height as f64 / cell).ceil() as usize + 1;
    let lattice: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for y in 0..height {
        let v = y as f64 / cell;
        let j = (v as usize).min(ny - 2);
        let fv = smoothstep(v - j as f64);
        for x in 0..width {
            let u = x as f64 / cell;
            let i = (u as usize).min(nx - 2);
            let fu = smoothstep(u - i as f64);
            let a = lattice[j * nx + i];
            let b = lattice[j * nx + i + 1];
            let c = lattice[(j + 1) * nx + i];
            let d = lattice[(j + 1) * nx + i + 1];
            let top = a + (b - a) * fu;
            let bot = c + (d - c) * fu;
            field[y * width + x] += amp * (top + (bot - top) * fv);
        }
    }
}

/// Renders a deterministic scene for `seed` at `width` x `height`.
pub fn synth_scene(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = width as f64;
    let h = height as f64;

    let mut field = vec![0.0f64; width * height];

    // Octave stack. The coarsest cell is capped in absolute pixels so that
    // scenes of any size share the same fine-scale statistics; otherwise
    // large scenes degenerate to low-frequency fields that saturate the
    // blur response. Amplitude grows sub-linearly in cell size for the
    // same reason: a full 1/f slope leaves too little mid-scale contrast
    // to separate the strongest blur radii.
    let mut cell = (w.min(h) / 3.0).max(4.0).min(64.0);
    while cell >= 2.0 {
        add_octave(&mut field, width, height, cell, cell.powf(0.6), &mut rng);
        cell /= 2.0;
    }

    // hard-edged patches: corners for the detectors, block-scale edges
    // for the compression features
    for _ in 0..5 {
        let side = rng.gen_range(0.08..0.20) * w.min(h);
        let x0 = rng.gen_range(0.0..(w - side));
        let y0 = rng.gen_range(0.0..(h - side));
        let amp = rng.gen_range(0.45..0.75) * w.min(h) / 3.0
            * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for y in y0 as usize..((y0 + side) as usize).min(height) {
            for x in x0 as usize..((x0 + side) as usize).min(width) {
                field[y * width + x] += amp;
            }
        }
    }
    for _ in 0..3 {
        let r = rng.gen_range(0.04..0.10) * w.min(h);
        let cx = rng.gen_range(r..w - r);
        let cy = rng.gen_range(r..h - r);
        let amp = rng.gen_range(0.45..0.75) * w.min(h) / 3.0
            * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let reach = r as isize + 1;
        let (icx, icy) = (cx as isize, cy as isize);
        for y in (icy - reach).max(0)..(icy + reach).min(height as isize) {
            for x in (icx - reach).max(0)..(icx + reach).min(width as isize) {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    field[y as usize * width + x as usize] += amp;
                }
            }
        }
    }

    // normalize structure into [28, 227], then add grain of a fixed
    // amplitude so the finest scale is statistically identical per scene
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &field {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1.0);
    let data = field
        .iter()
        .map(|&v| {
            let structured = 28.0 + (v - lo) / span * 199.0;
            let grained = structured + rng.gen_range(-5.0..5.0);
            grained.round().clamp(25.0, 230.0) as u8
        })
        .collect();
    GrayImage::new(width, height, data).expect("sized buffer")
}
