//! Small procedurally generated 28x28 ten-class image sets.
//!
//! Each class owns three Gaussian blobs at fixed positions; instances jitter
//! the blob centres and add pixel noise. Used for hermetic tests and smoke
//! runs where the real benchmarks are not available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageTensor, RawDataset, Split, IMAGE_SIDE, NUM_CLASSES};

const BLOBS_PER_CLASS: usize = 3;

fn class_centres(class: usize) -> [(f64, f64); BLOBS_PER_CLASS] {
    // Fixed layout independent of the instance seed.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1A55 + class as u64);
    let mut centres = [(0.0, 0.0); BLOBS_PER_CLASS];
    for c in centres.iter_mut() {
        *c = (rng.gen_range(5.0..23.0), rng.gen_range(5.0..23.0));
    }
    centres
}

fn render(class: usize, rng: &mut impl Rng) -> Vec<u8> {
    let centres = class_centres(class);
    let mut pixels = vec![0u8; IMAGE_SIDE * IMAGE_SIDE];
    let jittered: Vec<(f64, f64)> = centres
        .iter()
        .map(|&(r, c)| (r + rng.gen_range(-1.5..1.5), c + rng.gen_range(-1.5..1.5)))
        .collect();
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let mut v: f64 = jittered
                .iter()
                .map(|&(br, bc)| {
                    let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                    (-d2 / 6.0).exp()
                })
                .sum();
            v += rng.gen_range(0.0..0.15);
            pixels[r * IMAGE_SIDE + c] = (v.min(1.0) * 255.0).round() as u8;
        }
    }
    pixels
}

/// `per_class` instances of each class, labels cycling `0..10`.
pub fn generate(per_class: usize, seed: u64, split: Split) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per_class * NUM_CLASSES;
    let mut pixels = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % NUM_CLASSES;
        pixels.extend(render(class, &mut rng));
        labels.push(class as u8);
    }
    let images = ImageTensor {
        count: n,
        rows: IMAGE_SIDE,
        cols: IMAGE_SIDE,
        pixels,
    };
    RawDataset::new(images, labels, split).expect("lengths agree by construction")
}
