//! MNIST IDX ingestion, per-class partitioning and Poisson rate coding.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is outside 0..{NUM_CLASSES}")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("rate coding probability {probability} exceeds 1 (max_rate_hz * dt must be <= 1000)")]
    RateTooHigh { probability: f64 },
    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        requested: usize,
    },
}

/// Images with their labels and a class → sample-index map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    per_class: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, DataError> {
        let size = rows * cols;
        let images = pixels.len().checked_div(size).unwrap_or(0);
        if images * size != pixels.len() || images != labels.len() {
            return Err(DataError::CountMismatch {
                images,
                labels: labels.len(),
            });
        }
        let mut per_class = vec![Vec::new(); NUM_CLASSES];
        for (index, &label) in labels.iter().enumerate() {
            if label as usize >= NUM_CLASSES {
                return Err(DataError::LabelOutOfRange { index, label });
            }
            per_class[label as usize].push(index);
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
            per_class,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.image_size();
        &self.pixels[index * n..(index + 1) * n]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Sample indices of one class, in file order.
    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.per_class[class]
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<(), DataError> {
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 16)?;
    check_magic(path, &bytes, IMAGE_MAGIC)?;
    let count = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let expected = 16 + count * rows * cols;
    check_len(path, &bytes, expected)?;
    Ok((count, rows, cols, bytes[16..expected].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 8)?;
    check_magic(path, &bytes, LABEL_MAGIC)?;
    let count = be_u32(&bytes, 4) as usize;
    check_len(path, &bytes, 8 + count)?;
    Ok(bytes[8..8 + count].to_vec())
}

pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let (count, rows, cols, pixels) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if count != labels.len() {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Dataset::new(rows, cols, pixels, labels)
}

/// Writes a dataset as an image/label IDX pair.
pub fn write_mnist(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut img = Vec::with_capacity(16 + ds.pixels.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(ds.rows as u32).to_be_bytes());
    img.extend_from_slice(&(ds.cols as u32).to_be_bytes());
    img.extend_from_slice(&ds.pixels);
    fs::File::create(images_path)?.write_all(&img)?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    fs::File::create(labels_path)?.write_all(&lab)
}

/// Binary spike raster of `duration_steps × num_inputs`, stored sparsely as
/// the active input indices of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    num_inputs: usize,
    dt: f64,
    offsets: Vec<u32>,
    active: Vec<u32>,
}

impl SpikeTrain {
    /// A raster with no spikes.
    pub fn silent(num_inputs: usize, duration_steps: usize, dt: f64) -> Self {
        Self {
            num_inputs,
            dt,
            offsets: vec![0; duration_steps + 1],
            active: Vec::new(),
        }
    }

    /// Builds a train from a dense `[step][input]` boolean raster.
    pub fn from_dense(raster: &[Vec<bool>], num_inputs: usize, dt: f64) -> Self {
        let mut offsets = Vec::with_capacity(raster.len() + 1);
        let mut active = Vec::new();
        offsets.push(0);
        for step in raster {
            assert_eq!(step.len(), num_inputs, "raster row width");
            active.extend(step.iter().enumerate().filter(|(_, &s)| s).map(|(j, _)| j as u32));
            offsets.push(active.len() as u32);
        }
        Self {
            num_inputs,
            dt,
            offsets,
            active,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn duration_steps(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Inputs spiking at step `t`, ascending.
    #[inline]
    pub fn active(&self, t: usize) -> &[u32] {
        &self.active[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }

    pub fn get(&self, t: usize, input: usize) -> bool {
        self.active(t).binary_search(&(input as u32)).is_ok()
    }

    pub fn total_spikes(&self) -> usize {
        self.active.len()
    }

    /// Spike count per input channel.
    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0; self.num_inputs];
        for &j in &self.active {
            c[j as usize] += 1;
        }
        c
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.duration_steps())
            .map(|t| {
                let mut row = vec![false; self.num_inputs];
                for &j in self.active(t) {
                    row[j as usize] = true;
                }
                row
            })
            .collect()
    }
}

/// Per-step spike probability of a pixel of intensity `pixel`.
pub fn spike_probability(pixel: u8, max_rate_hz: f64, dt_ms: f64) -> f64 {
    pixel as f64 / 255.0 * max_rate_hz * dt_ms / 1000.0
}

/// Poisson rate coding: each pixel spikes independently each step with
/// probability `(p / 255) * max_rate_hz * dt / 1000`.
pub fn encode_rate<R: Rng + ?Sized>(
    image: &[u8],
    duration_steps: usize,
    max_rate_hz: f64,
    dt_ms: f64,
    rng: &mut R,
) -> Result<SpikeTrain, DataError> {
    let peak = max_rate_hz * dt_ms / 1000.0;
    if !(0.0..=1.0).contains(&peak) {
        return Err(DataError::RateTooHigh { probability: peak });
    }
    let live: Vec<(u32, f64)> = image
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(j, &p)| (j as u32, spike_probability(p, max_rate_hz, dt_ms)))
        .collect();
    let mut offsets = Vec::with_capacity(duration_steps + 1);
    let mut active = Vec::new();
    offsets.push(0);
    for _ in 0..duration_steps {
        for &(j, prob) in &live {
            if rng.gen::<f64>() < prob {
                active.push(j);
            }
        }
        offsets.push(active.len() as u32);
    }
    Ok(SpikeTrain {
        num_inputs: image.len(),
        dt: dt_ms,
        offsets,
        active,
    })
}

/// Draws `samples_per_class` distinct samples from every class after a seeded
/// shuffle. Entry `c` of the result holds class `c`'s sample indices.
pub fn split_by_class<R: Rng + ?Sized>(
    ds: &Dataset,
    samples_per_class: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, DataError> {
    for class in 0..NUM_CLASSES {
        let available = ds.class_indices(class).len();
        if available < samples_per_class {
            return Err(DataError::InsufficientSamples {
                class,
                available,
                requested: samples_per_class,
            });
        }
    }
    Ok(subset_by_class(ds, Some(samples_per_class), rng))
}

/// Like [`split_by_class`] but takes up to `cap` samples per class (all when
/// `None`) without failing on short classes.
pub fn subset_by_class<R: Rng + ?Sized>(ds: &Dataset, cap: Option<usize>, rng: &mut R) -> Vec<Vec<usize>> {
    (0..NUM_CLASSES)
        .map(|class| {
            let mut idx = ds.class_indices(class).to_vec();
            idx.shuffle(rng);
            if let Some(cap) = cap {
                idx.truncate(cap);
            }
            idx
        })
        .collect()
}
