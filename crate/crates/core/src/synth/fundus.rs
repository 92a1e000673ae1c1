//! 128×128 grayscale fundus images: a dim disc crossed by dark curved
//! vessels. Retinopathy adds bright exudate blobs and uneven vessel calibre.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::gauss;
use crate::image::{median3x3, Image};

pub const SIDE: usize = 128;
const CENTER: f64 = 63.5;
const RADIUS: f64 = 60.0;
/// Brightness above which a filtered pixel counts as exudate.
pub const BLOB_THRESHOLD: f64 = 0.6;

fn bezier(p: [[f64; 2]; 3], t: f64) -> [f64; 2] {
    let u = 1.0 - t;
    std::array::from_fn(|k| u * u * p[0][k] + 2.0 * u * t * p[1][k] + t * t * p[2][k])
}

/// Stamps a vessel of radius `radius(t)` along a quadratic curve into a
/// coverage buffer (max-combined).
fn stamp_vessel(cover: &mut [f64], ctrl: [[f64; 2]; 3], radius: impl Fn(f64) -> f64) {
    let steps = 400;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let [cx, cy] = bezier(ctrl, t);
        let r = radius(t);
        let reach = (r + 1.5).ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (cx.round() as isize + dx, cy.round() as isize + dy);
                if x < 0 || y < 0 || x >= SIDE as isize || y >= SIDE as isize {
                    continue;
                }
                let d = (x as f64 - cx).hypot(y as f64 - cy);
                let c = (r + 0.5 - d).clamp(0.0, 1.0);
                let idx = y as usize * SIDE + x as usize;
                cover[idx] = cover[idx].max(c);
            }
        }
    }
}

pub fn fundus_image(rng: &mut ChaCha8Rng, retinopathy: bool, difficulty: f64) -> Image {
    let mut px = vec![0.0; SIDE * SIDE];
    let base = rng.random_range(0.3..0.4);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let r = (x as f64 - CENTER).hypot(y as f64 - CENTER);
            if r <= RADIUS {
                px[y * SIDE + x] = base + 0.08 * (1.0 - r / RADIUS);
            }
        }
    }

    // vessels fan out from an off-centre disc
    let origin = [
        CENTER + rng.random_range(-30.0..-18.0),
        CENTER + rng.random_range(-6.0..6.0),
    ];
    let n_vessels = rng.random_range(4..=6);
    let irregular = if retinopathy { 0.55 * (1.0 - difficulty) } else { 0.0 };
    let mut cover = vec![0.0; SIDE * SIDE];
    for v in 0..n_vessels {
        let angle = -PI / 2.0 + PI * (v as f64 + rng.random_range(0.2..0.8)) / n_vessels as f64;
        let len = rng.random_range(55.0..80.0);
        let end = [origin[0] + len * angle.cos(), origin[1] + len * angle.sin()];
        let bend = rng.random_range(-18.0..18.0);
        let mid = [
            (origin[0] + end[0]) / 2.0 - bend * angle.sin(),
            (origin[1] + end[1]) / 2.0 + bend * angle.cos(),
        ];
        let r0 = rng.random_range(1.2..2.0);
        let freq = rng.random_range(3.0..7.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        stamp_vessel(&mut cover, [origin, mid, end], |t| {
            let taper = r0 * (1.0 - 0.4 * t);
            taper * (1.0 + irregular * (2.0 * PI * freq * t + phase).sin())
        });
    }
    for (p, c) in px.iter_mut().zip(&cover) {
        *p *= 1.0 - 0.55 * c;
    }

    if retinopathy {
        let count = rng.random_range(4..=9) as f64;
        let count = ((count * (1.0 - 0.5 * difficulty)).round() as usize).max(1);
        let contrast = 0.45 * (1.0 - 0.6 * difficulty);
        for _ in 0..count {
            let rho = RADIUS * 0.8 * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..2.0 * PI);
            let (bx, by) = (CENTER + rho * theta.cos(), CENTER + rho * theta.sin());
            let sigma: f64 = rng.random_range(3.0..4.5);
            let reach = (3.0 * sigma).ceil() as isize;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (x, y) = (bx.round() as isize + dx, by.round() as isize + dy);
                    if x < 0 || y < 0 || x >= SIDE as isize || y >= SIDE as isize {
                        continue;
                    }
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    px[y as usize * SIDE + x as usize] += contrast * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }

    let noise = 0.02 + 0.04 * difficulty;
    for p in &mut px {
        *p += gauss(rng, 0.0, noise);
    }
    Image::new(SIDE, SIDE, px).expect("square raster")
}

/// Number of 8-connected bright components after a 3×3 median filter.
pub fn bright_blob_count(img: &Image) -> usize {
    let f = median3x3(img);
    let (w, h) = (f.width(), f.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || f.pixels()[start] <= BLOB_THRESHOLD {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && f.pixels()[j] > BLOB_THRESHOLD {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_retina, CorpusSpec, Kind};

    #[test]
    fn sizes_and_determinism() {
        let spec = CorpusSpec::new(Kind::Retina, 3, 0.3, 5).unwrap();
        let a = gen_retina(&spec);
        assert!(a.iter().all(|(img, _)| img.width() == 128 && img.height() == 128));
        assert_eq!(a, gen_retina(&spec));
    }

    #[test]
    fn blob_count_separates_classes_at_zero_difficulty() {
        let spec = CorpusSpec::new(Kind::Retina, 30, 0.0, 8).unwrap();
        for (img, sick) in gen_retina(&spec) {
            let n = bright_blob_count(&img);
            if sick {
                assert!(n >= 1, "retinopathy image with no blobs");
            } else {
                assert_eq!(n, 0, "normal image with {n} blobs");
            }
        }
    }
}
