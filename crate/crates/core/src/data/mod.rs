//! Dataset containers, loaders and batching.

mod batch;
mod dataset;
pub mod idx;
pub mod npz;

pub use batch::make_batches;
pub use dataset::{
    expected_files, load_dataset, read_npz_file, Dataset, DatasetName, ImageTensor, LabelVector, Split, IMAGE_SIZE,
    MNIST_FILES, PNEUMONIA_FILE,
};
pub use idx::{parse_idx, write_idx, IdxArray};
pub use npz::{parse_npz, write_npz, DType, NpyArray, NpzArchive};
