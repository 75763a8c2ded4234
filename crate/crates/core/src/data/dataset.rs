use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::idx::parse_idx;
use super::npz::{parse_npz, read_npz_members, NpyArray};
use crate::error::{Error, Result};

/// Side length every image is padded to.
pub const IMAGE_SIZE: usize = 32;

/// A batch of images in NCHW layout with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Vec<f32>,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ImageTensor {
    pub fn new(data: Vec<f32>, n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "image buffer of {} values for shape ({n},{c},{h},{w})",
                data.len()
            )));
        }
        Ok(Self { data, n, c, h, w })
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    /// Copies the listed samples, in order, into a new tensor.
    pub fn gather(&self, indices: &[usize]) -> ImageTensor {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        ImageTensor {
            data,
            n: indices.len(),
            c: self.c,
            h: self.h,
            w: self.w,
        }
    }

    /// Zero-pads every image symmetrically to `size × size`.
    pub fn pad_to(&self, size: usize) -> Result<ImageTensor> {
        if size < self.h || size < self.w || (size - self.h) % 2 != 0 || (size - self.w) % 2 != 0 {
            return Err(Error::Shape(format!(
                "cannot pad {}x{} symmetrically to {size}x{size}",
                self.h, self.w
            )));
        }
        let (ph, pw) = ((size - self.h) / 2, (size - self.w) / 2);
        let mut data = vec![0.0; self.n * self.c * size * size];
        for plane in 0..self.n * self.c {
            let src = &self.data[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            let dst = &mut data[plane * size * size..(plane + 1) * size * size];
            for r in 0..self.h {
                dst[(r + ph) * size + pw..(r + ph) * size + pw + self.w]
                    .copy_from_slice(&src[r * self.w..(r + 1) * self.w]);
            }
        }
        ImageTensor::new(data, self.n, self.c, size, size)
    }

    /// Inverse of [`pad_to`](Self::pad_to): crops the centred `h × w` window.
    pub fn crop_center(&self, h: usize, w: usize) -> Result<ImageTensor> {
        if h > self.h || w > self.w {
            return Err(Error::Shape(format!("cannot crop {}x{} to {h}x{w}", self.h, self.w)));
        }
        let (oh, ow) = ((self.h - h) / 2, (self.w - w) / 2);
        let mut data = Vec::with_capacity(self.n * self.c * h * w);
        for plane in 0..self.n * self.c {
            let src = &self.data[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            for r in 0..h {
                let row = (r + oh) * self.w + ow;
                data.extend_from_slice(&src[row..row + w]);
            }
        }
        ImageTensor::new(data, self.n, self.c, h, w)
    }
}

/// Integer class labels paired with an [`ImageTensor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn gather(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub images: ImageTensor,
    pub labels: LabelVector,
}

impl Split {
    pub fn len(&self) -> usize {
        self.images.n
    }

    pub fn is_empty(&self) -> bool {
        self.images.n == 0
    }

    pub fn gather(&self, indices: &[usize]) -> Split {
        Split {
            images: self.images.gather(indices),
            labels: self.labels.gather(indices),
        }
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Split {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.gather(&idx)
    }

    /// A seeded random subset of `n` samples (or all of them if fewer).
    pub fn subsample(&self, n: usize, seed: u64) -> Split {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        self.gather(&idx)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Split,
    pub test: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Pneumonia,
}

impl DatasetName {
    pub fn num_classes(self) -> usize {
        match self {
            DatasetName::Mnist => 10,
            DatasetName::Pneumonia => 2,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Pneumonia => "pneumonia",
        })
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "pneumonia" | "pneumoniamnist" => Ok(DatasetName::Pneumonia),
            other => Err(Error::InvalidArgument(format!("unknown dataset `{other}`"))),
        }
    }
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub const PNEUMONIA_FILE: &str = "pneumoniamnist.npz";

/// Loads a dataset from `dir`, scaling pixels to `[0, 1]` and padding to 32×32.
///
/// PneumoniaMNIST ships train/val/test; the validation images are appended
/// to the test split, giving the 4708/1148 partition.
pub fn load_dataset(name: DatasetName, dir: &Path) -> Result<Dataset> {
    match name {
        DatasetName::Mnist => load_mnist(dir),
        DatasetName::Pneumonia => load_pneumonia(dir),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn images_from_u8(bytes: &[u8], n: usize, h: usize, w: usize) -> Result<ImageTensor> {
    let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::new(data, n, 1, h, w)?.pad_to(IMAGE_SIZE)
}

fn load_mnist(dir: &Path) -> Result<Dataset> {
    let read = |file: &str| -> Result<_> {
        let path = dir.join(file);
        parse_idx(&read_file(&path)?)
    };
    let split = |img_file: &str, lbl_file: &str| -> Result<Split> {
        let img = read(img_file)?;
        let lbl = read(lbl_file)?;
        if img.dims.len() != 3 || lbl.dims.len() != 1 || img.dims[0] != lbl.dims[0] {
            return Err(Error::Shape(format!(
                "{img_file} dims {:?} vs {lbl_file} dims {:?}",
                img.dims, lbl.dims
            )));
        }
        Ok(Split {
            images: images_from_u8(&img.data, img.dims[0], img.dims[1], img.dims[2])?,
            labels: LabelVector::new(lbl.data.iter().map(|&l| l as usize).collect(), 10)?,
        })
    };
    Ok(Dataset {
        name: "mnist".into(),
        train: split(MNIST_FILES[0], MNIST_FILES[1])?,
        test: split(MNIST_FILES[2], MNIST_FILES[3])?,
    })
}

fn npy_images(arr: &NpyArray) -> Result<ImageTensor> {
    if arr.dims.len() != 3 {
        return Err(Error::Shape(format!("image array dims {:?}", arr.dims)));
    }
    let raw: Vec<u8> = arr.to_f64().into_iter().map(|v| v as u8).collect();
    images_from_u8(&raw, arr.dims[0], arr.dims[1], arr.dims[2])
}

fn npy_labels(arr: &NpyArray, num_classes: usize) -> Result<LabelVector> {
    LabelVector::new(arr.to_f64().into_iter().map(|v| v as usize).collect(), num_classes)
}

fn load_pneumonia(dir: &Path) -> Result<Dataset> {
    let bytes = read_file(&dir.join(PNEUMONIA_FILE))?;
    let arch = parse_npz(&bytes)?;
    let train = Split {
        images: npy_images(&arch["train_images"])?,
        labels: npy_labels(&arch["train_labels"], 2)?,
    };
    let mut test = Split {
        images: npy_images(&arch["test_images"])?,
        labels: npy_labels(&arch["test_labels"], 2)?,
    };
    if let (Some(vi), Some(vl)) = (arch.get("val_images"), arch.get("val_labels")) {
        let vi = npy_images(vi)?;
        let vl = npy_labels(vl, 2)?;
        let mut data = vi.data;
        data.extend_from_slice(&test.images.data);
        let mut labels = vl.labels;
        labels.extend_from_slice(&test.labels.labels);
        test = Split {
            images: ImageTensor::new(data, vi.n + test.images.n, 1, IMAGE_SIZE, IMAGE_SIZE)?,
            labels: LabelVector::new(labels, 2)?,
        };
    }
    Ok(Dataset {
        name: "pneumonia".into(),
        train,
        test,
    })
}

/// Lists the files that `load_dataset` expects under a data directory.
pub fn expected_files(name: DatasetName) -> Vec<&'static str> {
    match name {
        DatasetName::Mnist => MNIST_FILES.to_vec(),
        DatasetName::Pneumonia => vec![PNEUMONIA_FILE],
    }
}

/// Loads the archive members without the MedMNIST key check. Used by tooling.
pub fn read_npz_file(path: &Path) -> Result<std::collections::BTreeMap<String, NpyArray>> {
    read_npz_members(&read_file(path)?)
}
