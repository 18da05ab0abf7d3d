//! IDX binary image/label files (big-endian), the MNIST container format.

use crate::data::{LabeledDataset, Labels};
use crate::error::{CoreError, Result};
use crate::linalg::DenseMatrix;
use std::io::Read;
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn new(inner: R) -> Self {
        Cursor { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| CoreError::Parse {
            offset: at,
            msg: format!("truncated file while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_be_bytes(b))
    }
}

/// Load an IDX image/label file pair; pixels are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut img = Cursor::new(std::io::BufReader::new(std::fs::File::open(images_path)?));
    let magic = img.read_u32("images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(CoreError::Parse {
            offset: 0,
            msg: format!("bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = img.read_u32("image count")? as usize;
    let rows = img.read_u32("image rows")? as usize;
    let cols = img.read_u32("image cols")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels, "pixel data")?;

    let mut lab = Cursor::new(std::io::BufReader::new(std::fs::File::open(labels_path)?));
    let magic = lab.read_u32("labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(CoreError::Parse {
            offset: 0,
            msg: format!("bad labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let label_count = lab.read_u32("label count")? as usize;
    if label_count != count {
        return Err(CoreError::Parse {
            offset: 4,
            msg: format!("label count {label_count} != image count {count}"),
        });
    }
    let mut labels = vec![0u8; label_count];
    lab.read_exact(&mut labels, "label data")?;

    let features = DenseMatrix::from_vec(
        count,
        rows * cols,
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )?;
    LabeledDataset::new(features, Labels::Class(labels.iter().map(|&l| l as u32).collect()), None)
}

/// Write a dataset (values in [0, 1], class labels) as an IDX file pair.
/// Used for fixtures and for exporting generated corpora in MNIST format.
pub fn write_idx(ds: &LabeledDataset, side: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    if ds.dim() != side * side {
        return Err(CoreError::config(format!(
            "feature dim {} is not {side}x{side}",
            ds.dim()
        )));
    }
    let classes = match &ds.labels {
        Labels::Class(c) => c,
        Labels::Real(_) => return Err(CoreError::domain("idx labels must be classes")),
    };
    let mut img = Vec::with_capacity(16 + ds.len() * ds.dim());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    for v in ds.features.data() {
        img.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    std::fs::write(images_path, img)?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &c in classes {
        lab.push(c as u8);
    }
    std::fs::write(labels_path, lab)?;
    Ok(())
}
