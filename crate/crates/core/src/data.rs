//! IDX ingestion, normalization and label-sorted sharding.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array2;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Pixels and labels exactly as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols` bytes.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    /// `m x d`, values in `[0, 1]`.
    pub features: Array2<f32>,
    /// `m x c` one-hot rows.
    pub labels_onehot: Array2<f32>,
    pub labels_raw: Vec<u8>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_raw.is_empty()
    }
}

/// `n` disjoint, equally sized index lists covering `0..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientShards {
    pub shards: Vec<Vec<usize>>,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Idx {
            path: path.to_path_buf(),
            offset: buf.len() as u64,
            reason: format!("header truncated, needed 4 bytes at offset {offset}"),
        })
}

fn parse_images(buf: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let magic = be_u32(buf, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let n = be_u32(buf, 4, path)? as usize;
    let h = be_u32(buf, 8, path)? as usize;
    let w = be_u32(buf, 12, path)? as usize;
    let need = n * h * w;
    let payload = &buf[16..];
    if payload.len() < need {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: buf.len() as u64,
            reason: format!("payload truncated: expected {} bytes through offset {}", need, 16 + need),
        });
    }
    Ok((n, h * w, payload[..need].to_vec()))
}

fn parse_labels(buf: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(buf, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let n = be_u32(buf, 4, path)? as usize;
    let payload = &buf[8..];
    if payload.len() < n {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: buf.len() as u64,
            reason: format!("payload truncated: expected {} bytes through offset {}", n, 8 + n),
        });
    }
    Ok(payload[..n].to_vec())
}

/// Read an IDX image file and its label file. Gzip-compressed files are
/// detected by their magic bytes and decompressed transparently; byte offsets
/// in errors refer to the decompressed stream.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let (rows, cols, pixels) = parse_images(&read_maybe_gz(images_path)?, images_path)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?, labels_path)?;
    if labels.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {rows} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    Ok(RawDataset {
        rows,
        cols,
        pixels,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

fn locate(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    if !plain.exists() && gz.exists() {
        gz
    } else {
        plain
    }
}

/// Load `train-*` or `t10k-*` IDX files from a directory, compressed or not.
pub fn load_split(dir: &Path, split: Split) -> Result<RawDataset> {
    let images = locate(dir, &format!("{}-images-idx3-ubyte", split.prefix()));
    let labels = locate(dir, &format!("{}-labels-idx1-ubyte", split.prefix()));
    load_idx(&images, &labels)
}

/// Number of points in a split, read from its label file only.
pub fn count_split(dir: &Path, split: Split) -> Result<usize> {
    let path = locate(dir, &format!("{}-labels-idx1-ubyte", split.prefix()));
    Ok(parse_labels(&read_maybe_gz(&path)?, &path)?.len())
}

/// Scale pixels to `[0, 1]` and one-hot encode labels over `num_classes`.
pub fn preprocess(raw: &RawDataset, num_classes: usize) -> Result<LabeledDataset> {
    if raw.pixels.len() != raw.rows * raw.cols || raw.labels.len() != raw.rows {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels and {} labels for {} rows of {} columns",
            raw.pixels.len(),
            raw.labels.len(),
            raw.rows,
            raw.cols
        )));
    }
    if let Some(&bad) = raw.labels.iter().find(|&&y| y as usize >= num_classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{num_classes}")));
    }
    let features = Array2::from_shape_vec(
        (raw.rows, raw.cols),
        raw.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    )
    .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let mut labels_onehot = Array2::<f32>::zeros((raw.rows, num_classes));
    for (i, &y) in raw.labels.iter().enumerate() {
        labels_onehot[[i, y as usize]] = 1.0;
    }
    Ok(LabeledDataset {
        features,
        labels_onehot,
        labels_raw: raw.labels.clone(),
    })
}

/// Stable sort by label, then cut into `n` contiguous equal slices.
pub fn shard_non_iid(labels: &[u8], n: usize) -> Result<ClientShards> {
    let m = labels.len();
    if n == 0 || !m.is_multiple_of(n) {
        return Err(Error::invalid(format!("{m} points cannot be split into {n} equal shards")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| labels[i]);
    Ok(ClientShards {
        shards: order.chunks(m / n).map(<[usize]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, h: u32, w: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, n, h, w] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [LABEL_MAGIC, labels.len() as u32] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(labels);
        b
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn parses_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..12).collect();
        let img = idx_images(3, 2, 2, &pixels);
        let lab = idx_labels(&[4, 0, 9]);
        let ip = write(dir.path(), "i", &img);
        let lp = write(dir.path(), "l", &lab);
        let raw = load_idx(&ip, &lp).unwrap();
        assert_eq!((raw.rows, raw.cols), (3, 4));
        assert_eq!(raw.pixels, pixels);
        assert_eq!(raw.labels, vec![4, 0, 9]);

        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&img).unwrap();
        let gz = write(dir.path(), "train-images-idx3-ubyte.gz", &enc.finish().unwrap());
        write(dir.path(), "train-labels-idx1-ubyte", &lab);
        assert_eq!(load_idx(&gz, &lp).unwrap(), raw);
        assert_eq!(load_split(dir.path(), Split::Train).unwrap(), raw);
        assert_eq!(count_split(dir.path(), Split::Train).unwrap(), 3);
    }

    #[test]
    fn errors_name_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let img = idx_images(3, 2, 2, &[0; 10]);
        let ip = write(dir.path(), "i", &img);
        let lp = write(dir.path(), "l", &idx_labels(&[1, 2, 3]));
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::Idx { offset: 26, .. }), "{err}");
        assert!(err.to_string().contains("offset 26"));

        let bad = write(dir.path(), "b", &idx_labels(&[1, 2, 3]));
        assert!(matches!(load_idx(&bad, &lp), Err(Error::Idx { offset: 0, .. })));

        let ok = write(dir.path(), "ok", &idx_images(2, 1, 1, &[0, 0]));
        assert!(matches!(load_idx(&ok, &lp), Err(Error::DimensionMismatch(_))));

        let missing = dir.path().join("nope");
        let err = load_idx(&missing, &lp).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn preprocessing() {
        let raw = RawDataset {
            rows: 2,
            cols: 2,
            pixels: vec![0, 255, 51, 102],
            labels: vec![3, 0],
        };
        let ds = preprocess(&raw, 10).unwrap();
        assert_eq!(ds.features[[0, 0]], 0.0);
        assert_eq!(ds.features[[0, 1]], 1.0);
        assert!((ds.features[[1, 0]] - 0.2).abs() < 1e-7);
        assert_eq!(ds.labels_onehot.row(0).sum(), 1.0);
        assert_eq!(ds.labels_onehot[[0, 3]], 1.0);
        for (row, &y) in ds.labels_onehot.rows().into_iter().zip(&ds.labels_raw) {
            let arg = row.iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(arg, y as usize);
        }
        let bad = RawDataset { labels: vec![10, 0], ..raw };
        assert!(preprocess(&bad, 10).is_err());
    }

    #[test]
    fn sharding() {
        let labels = [2u8, 0, 1, 0, 2, 1];
        let s = shard_non_iid(&labels, 3).unwrap();
        assert_eq!(s.shards, vec![vec![1, 3], vec![2, 5], vec![0, 4]]);
        assert!(shard_non_iid(&labels, 4).is_err());
        assert!(shard_non_iid(&labels, 0).is_err());
    }
}
