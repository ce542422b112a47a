#![allow(dead_code)]
pub mod search;

use std::path::Path;

use qsnn::data::{write_mnist, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 28×28 images where class `c` is a horizontal and a vertical bar at
/// positions determined by `c`, plus sparse pixel noise.
pub fn bar_digits(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for k in 0..per_class * 10 {
        let c = k % 10;
        let mut img = [0u8; 784];
        let row = 3 + 2 * c;
        let col = 24 - 2 * c;
        for i in 0..28 {
            img[row * 28 + i] = 200 + rng.gen_range(0..56);
            img[i * 28 + col] = 200 + rng.gen_range(0..56);
        }
        for _ in 0..20 {
            img[rng.gen_range(0..784)] = rng.gen_range(0..120);
        }
        pixels.extend_from_slice(&img);
        labels.push(c as u8);
    }
    Dataset::new(28, 28, pixels, labels).unwrap()
}

/// Writes train and test sets under the file names the CLI expects.
pub fn write_bar_digits(dir: &Path, per_class: usize) {
    let train = bar_digits(per_class, 1);
    let test = bar_digits(per_class, 2);
    write_mnist(&train, dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).unwrap();
    write_mnist(&test, dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap();
}

/// `side`×`side` images with a bright row per class; classes below `classes`.
pub fn row_patterns(side: usize, classes: usize, per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for k in 0..per_class * classes {
        let c = k % classes;
        for r in 0..side {
            for _ in 0..side {
                pixels.push(if r == c { 255 } else if rng.gen_bool(0.05) { 100 } else { 0 });
            }
        }
        labels.push(c as u8);
    }
    Dataset::new(side, side, pixels, labels).unwrap()
}
