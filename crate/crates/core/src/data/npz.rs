//! NPZ archives: a ZIP of `.npy` members, as distributed by MedMNIST.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use crate::error::{Error, Result};

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

/// Member names every MedMNIST archive must provide.
pub const REQUIRED_ARRAYS: [&str; 4] = ["train_images", "train_labels", "test_images", "test_labels"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Bool,
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    U64,
    I64,
    F32,
    F64,
}

impl DType {
    fn parse(descr: &str) -> Result<Self> {
        let (order, code) = descr.split_at(1);
        let little = matches!(order, "<" | "|" | "=");
        let dt = match code {
            "b1" => DType::Bool,
            "u1" => DType::U8,
            "i1" => DType::I8,
            "u2" => DType::U16,
            "i2" => DType::I16,
            "u4" => DType::U32,
            "i4" => DType::I32,
            "u8" => DType::U64,
            "i8" => DType::I64,
            "f4" => DType::F32,
            "f8" => DType::F64,
            _ => return Err(Error::UnsupportedFormat(format!("npy dtype `{descr}`"))),
        };
        if !little && dt.size() > 1 {
            return Err(Error::UnsupportedFormat(format!("big-endian npy dtype `{descr}`")));
        }
        Ok(dt)
    }

    pub fn descr(self) -> &'static str {
        match self {
            DType::Bool => "|b1",
            DType::U8 => "|u1",
            DType::I8 => "|i1",
            DType::U16 => "<u2",
            DType::I16 => "<i2",
            DType::U32 => "<u4",
            DType::I32 => "<i4",
            DType::U64 => "<u8",
            DType::I64 => "<i8",
            DType::F32 => "<f4",
            DType::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::Bool | DType::U8 | DType::I8 => 1,
            DType::U16 | DType::I16 => 2,
            DType::U32 | DType::I32 | DType::F32 => 4,
            DType::U64 | DType::I64 | DType::F64 => 8,
        }
    }
}

/// One array member: shape, element type and raw little-endian bytes in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<u8>,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        let sz = self.dtype.size();
        self.data
            .chunks_exact(sz)
            .map(|c| match self.dtype {
                DType::Bool | DType::U8 => c[0] as f64,
                DType::I8 => c[0] as i8 as f64,
                DType::U16 => u16::from_le_bytes([c[0], c[1]]) as f64,
                DType::I16 => i16::from_le_bytes([c[0], c[1]]) as f64,
                DType::U32 => u32::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::I32 => i32::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::U64 => u64::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::I64 => i64::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::F64 => f64::from_le_bytes(c.try_into().unwrap()),
            })
            .collect()
    }
}

pub type NpzArchive = BTreeMap<String, NpyArray>;

/// Parses a MedMNIST-style archive. All of [`REQUIRED_ARRAYS`] must be present.
pub fn parse_npz(bytes: &[u8]) -> Result<NpzArchive> {
    let arrays = read_npz_members(bytes)?;
    for key in REQUIRED_ARRAYS {
        if !arrays.contains_key(key) {
            return Err(Error::MissingArray(key.to_string()));
        }
    }
    Ok(arrays)
}

/// Reads every `.npy` member of a ZIP archive without checking for required keys.
pub fn read_npz_members(bytes: &[u8]) -> Result<NpzArchive> {
    let mut zip = ZipArchive::new(Cursor::new(bytes)).map_err(|e| Error::Parse(format!("zip: {e}")))?;
    let mut out = BTreeMap::new();
    for i in 0..zip.len() {
        let mut member = zip
            .by_index(i)
            .map_err(|e| Error::Parse(format!("zip member {i}: {e}")))?;
        let name = member.name().to_string();
        let mut buf = Vec::with_capacity(member.size() as usize);
        member
            .read_to_end(&mut buf)
            .map_err(|e| Error::Parse(format!("zip member `{name}`: {e}")))?;
        let key = name.strip_suffix(".npy").unwrap_or(&name).to_string();
        out.insert(key, parse_npy(&buf)?);
    }
    Ok(out)
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(Error::Parse("missing npy magic".into()));
    }
    let major = bytes[6];
    let (header_len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Parse("truncated npy header".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(Error::UnsupportedFormat(format!("npy version {v}"))),
    };
    let end = start + header_len;
    if bytes.len() < end {
        return Err(Error::Parse("truncated npy header".into()));
    }
    let header = std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::Parse("npy header is not text".into()))?;
    let descr = dict_value(header, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let dtype = DType::parse(descr)?;
    if dict_value(header, "fortran_order")? != "False" {
        return Err(Error::UnsupportedFormat("fortran-ordered npy array".into()));
    }
    let shape = dict_value(header, "shape")?;
    let dims = shape
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad npy shape `{shape}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let nbytes = dims.iter().product::<usize>() * dtype.size();
    let body = &bytes[end..];
    if body.len() != nbytes {
        return Err(Error::Parse(format!(
            "npy payload is {} bytes, shape {dims:?} of {} needs {nbytes}",
            body.len(),
            dtype.descr()
        )));
    }
    Ok(NpyArray {
        dims,
        dtype,
        data: body.to_vec(),
    })
}

/// Extracts the raw text of `key`'s value from a Python dict literal.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Parse(format!("npy header lacks `{key}`"));
    let pos = header
        .find(&format!("'{key}'"))
        .or_else(|| header.find(&format!("\"{key}\"")))
        .ok_or_else(missing)?;
    let rest = &header[pos + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(missing)?;
    Ok(rest[..end].trim())
}

pub fn write_npy(array: &NpyArray) -> Vec<u8> {
    let shape = match array.dims.len() {
        1 => format!("({},)", array.dims[0]),
        _ => format!(
            "({})",
            array.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.dtype.descr(),
        shape
    );
    // Pad so the payload starts on a 64-byte boundary, newline-terminated.
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + array.data.len());
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&array.data);
    out
}

/// Writes an archive. `compress` selects deflate over stored members.
pub fn write_npz(arrays: &NpzArchive, compress: bool) -> Result<Vec<u8>> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let method = if compress {
        CompressionMethod::Deflated
    } else {
        CompressionMethod::Stored
    };
    let opts = SimpleFileOptions::default().compression_method(method);
    let zerr = |e: zip::result::ZipError| Error::Format(format!("zip: {e}"));
    for (name, array) in arrays {
        zip.start_file(format!("{name}.npy"), opts).map_err(zerr)?;
        zip.write_all(&write_npy(array))
            .map_err(|e| Error::Format(format!("zip: {e}")))?;
    }
    Ok(zip.finish().map_err(zerr)?.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u8_array(dims: &[usize], f: impl Fn(usize) -> u8) -> NpyArray {
        let n = dims.iter().product();
        NpyArray {
            dims: dims.to_vec(),
            dtype: DType::U8,
            data: (0..n).map(f).collect(),
        }
    }

    fn medmnist_like(n_train: usize, n_test: usize) -> NpzArchive {
        let mut m = NpzArchive::new();
        m.insert("train_images".into(), u8_array(&[n_train, 28, 28], |i| i as u8));
        m.insert("train_labels".into(), u8_array(&[n_train, 1], |i| (i % 2) as u8));
        m.insert("test_images".into(), u8_array(&[n_test, 28, 28], |i| (i * 3) as u8));
        m.insert("test_labels".into(), u8_array(&[n_test, 1], |i| (i % 2) as u8));
        m
    }

    #[test]
    fn pneumonia_shapes() {
        // Pneumonia-sized header shapes; the payload is small per image.
        let bytes = write_npz(&medmnist_like(4708, 1148), true).unwrap();
        let arch = parse_npz(&bytes).unwrap();
        assert_eq!(arch["train_images"].dims, vec![4708, 28, 28]);
        assert_eq!(arch["test_labels"].dims, vec![1148, 1]);
        assert!(arch["test_labels"].to_f64().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn missing_train_images() {
        let mut m = medmnist_like(4, 2);
        m.remove("train_images");
        let bytes = write_npz(&m, false).unwrap();
        match parse_npz(&bytes) {
            Err(Error::MissingArray(name)) => assert_eq!(name, "train_images"),
            other => panic!("expected MissingArray, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_dtype() {
        let mut raw = write_npy(&u8_array(&[2], |_| 0));
        let at = raw.windows(3).position(|w| w == b"|u1").unwrap();
        raw[at..at + 3].copy_from_slice(b"<c8");
        assert!(matches!(parse_npy(&raw), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn header_is_aligned() {
        let raw = write_npy(&u8_array(&[3, 5], |i| i as u8));
        assert_eq!((raw.len() - 15) % 64, 0);
    }

    #[test]
    fn parses_float_and_scalar_shapes() {
        let vals = [1.5f64, -2.25, 3.0];
        let arr = NpyArray {
            dims: vec![3],
            dtype: DType::F64,
            data: vals.iter().flat_map(|v| v.to_le_bytes()).collect(),
        };
        assert_eq!(parse_npy(&write_npy(&arr)).unwrap().to_f64(), vals);
        let scalar = NpyArray {
            dims: vec![],
            dtype: DType::I64,
            data: 7i64.to_le_bytes().to_vec(),
        };
        let back = parse_npy(&write_npy(&scalar)).unwrap();
        assert_eq!(back.dims, Vec::<usize>::new());
        assert_eq!(back.to_f64(), vec![7.0]);
    }

    proptest! {
        #[test]
        fn archive_round_trip(n in 1usize..20, m in 1usize..6, compress in any::<bool>()) {
            let mut arch = medmnist_like(n, m);
            arch.insert("extra".into(), NpyArray {
                dims: vec![n, 2],
                dtype: DType::F32,
                data: (0..2 * n).flat_map(|i| (i as f32 * 0.37).to_le_bytes()).collect(),
            });
            let bytes = write_npz(&arch, compress).unwrap();
            prop_assert_eq!(parse_npz(&bytes).unwrap(), arch);
        }
    }
}
