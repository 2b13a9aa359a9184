//! Dataset readers: UCI comma-separated files (Iris, Wisconsin diagnostic
//! breast cancer, Mushroom) and IDX image/label pairs (MNIST, Fashion MNIST),
//! optionally gzip-compressed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{uci_test_len, Dataset};

/// Datasets the CLI knows how to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetKind {
    Wdbc,
    Iris,
    Mushroom,
    Mnist,
    Fashion,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::Wdbc,
        DatasetKind::Iris,
        DatasetKind::Mushroom,
        DatasetKind::Mnist,
        DatasetKind::Fashion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Wdbc => "wdbc",
            DatasetKind::Iris => "iris",
            DatasetKind::Mushroom => "mushroom",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == name.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse {
                what: "dataset name",
                input: name.to_string(),
            })
    }

    /// Default layer sizes, input first.
    pub fn default_arch(self) -> Vec<usize> {
        match self {
            DatasetKind::Iris => vec![4, 16, 3],
            DatasetKind::Wdbc => vec![30, 16, 2],
            DatasetKind::Mushroom => vec![117, 32, 2],
            DatasetKind::Mnist | DatasetKind::Fashion => vec![784, 128, 64, 10],
        }
    }

    /// Default location below the data directory.
    pub fn default_path(self, data_dir: &Path) -> PathBuf {
        match self {
            DatasetKind::Iris => data_dir.join("iris/iris.data"),
            DatasetKind::Wdbc => data_dir.join("wdbc/wdbc.data"),
            DatasetKind::Mushroom => data_dir.join("mushroom/agaricus-lepiota.data"),
            DatasetKind::Mnist => data_dir.join("mnist"),
            DatasetKind::Fashion => data_dir.join("fashion"),
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, DatasetKind::Mnist | DatasetKind::Fashion)
    }
}

/// Reads a dataset and applies its canonical split. `checksums` maps file
/// names (not paths) to expected SHA-256 hex digests; files without an entry
/// are not checked.
pub fn ingest(
    kind: DatasetKind,
    path: &Path,
    split_seed: u64,
    checksums: &BTreeMap<String, String>,
) -> Result<Dataset> {
    let mut data = match kind {
        DatasetKind::Iris => read_iris(&read_checked(path, checksums)?, path)?,
        DatasetKind::Wdbc => read_wdbc(&read_checked(path, checksums)?, path)?,
        DatasetKind::Mushroom => read_mushroom(&read_checked(path, checksums)?, path)?,
        DatasetKind::Mnist | DatasetKind::Fashion => read_idx_dir(kind.name(), path, checksums)?,
    };
    if !kind.is_image() {
        let test = uci_test_len(data.len());
        data.shuffle_split(test, split_seed)?;
    }
    data.validate()?;
    Ok(data)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_checked(path: &Path, checksums: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(expected) = checksums.get(&name) {
        let actual = sha256_hex(&bytes);
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
                expected: expected.clone(),
                actual,
            });
        }
    }
    Ok(bytes)
}

fn text(bytes: &[u8], path: &Path) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|e| {
        Error::corrupt(path, format!("not UTF-8 at byte offset {}", e.utf8_error().valid_up_to()))
    })
}

/// Rows of comma-separated fields, skipping blank lines.
fn csv_rows(bytes: &[u8], path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    Ok(text(bytes, path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(|f| f.trim().to_string()).collect()))
        .collect())
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::corrupt(path, format!("line {line}: bad number {s:?}")))
}

/// Scales every column to `[0, 1]`; constant columns become 0.
fn min_max(features: &mut [f64], n_features: usize) {
    for c in 0..n_features {
        let col = features.iter().skip(c).step_by(n_features);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        let span = hi - lo;
        for x in features.iter_mut().skip(c).step_by(n_features) {
            *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
        }
    }
}

/// Builds a dataset from numeric rows with a class column.
fn numeric_dataset(
    name: &str,
    rows: Vec<(usize, Vec<String>)>,
    path: &Path,
    n_features: usize,
    label_col: usize,
    feature_cols: std::ops::Range<usize>,
) -> Result<Dataset> {
    let classes: BTreeSet<String> = rows
        .iter()
        .filter_map(|(_, r)| r.get(label_col).cloned())
        .collect();
    let classes: Vec<String> = classes.into_iter().collect();
    let mut features = Vec::with_capacity(rows.len() * n_features);
    let mut labels = Vec::with_capacity(rows.len());
    let width = feature_cols.end.max(label_col + 1);
    for (line, r) in &rows {
        if r.len() != width {
            return Err(Error::corrupt(
                path,
                format!("line {line}: expected {width} fields, found {}", r.len()),
            ));
        }
        for c in feature_cols.clone() {
            features.push(parse_f64(&r[c], path, *line)?);
        }
        labels.push(classes.binary_search(&r[label_col]).unwrap() as u32);
    }
    if labels.is_empty() {
        return Err(Error::corrupt(path, "no samples"));
    }
    min_max(&mut features, n_features);
    Ok(Dataset {
        name: name.to_string(),
        n_features,
        n_classes: classes.len(),
        features,
        labels,
        train: vec![],
        test: vec![],
        norm: "minmax".into(),
    })
}

/// `sepal length, sepal width, petal length, petal width, class`.
pub fn read_iris(bytes: &[u8], path: &Path) -> Result<Dataset> {
    numeric_dataset("iris", csv_rows(bytes, path)?, path, 4, 4, 0..4)
}

/// `id, diagnosis (M/B), 30 real features`. Labels: B = 0, M = 1.
pub fn read_wdbc(bytes: &[u8], path: &Path) -> Result<Dataset> {
    numeric_dataset("wdbc", csv_rows(bytes, path)?, path, 30, 1, 2..32)
}

/// `class (e/p), 22 categorical attributes`, one-hot encoded over the values
/// observed in each column (`?` counts as a value). Labels: e = 0, p = 1.
pub fn read_mushroom(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let rows = csv_rows(bytes, path)?;
    const ATTRS: usize = 22;
    let mut values: Vec<BTreeSet<String>> = vec![BTreeSet::new(); ATTRS];
    for (line, r) in &rows {
        if r.len() != ATTRS + 1 {
            return Err(Error::corrupt(
                path,
                format!("line {line}: expected {} fields, found {}", ATTRS + 1, r.len()),
            ));
        }
        for (c, v) in r[1..].iter().enumerate() {
            values[c].insert(v.clone());
        }
    }
    let values: Vec<Vec<String>> = values.into_iter().map(|s| s.into_iter().collect()).collect();
    let offsets: Vec<usize> = values
        .iter()
        .scan(0, |acc, v| {
            let o = *acc;
            *acc += v.len();
            Some(o)
        })
        .collect();
    let n_features: usize = values.iter().map(Vec::len).sum();
    let mut features = vec![0.0; rows.len() * n_features];
    let mut labels = Vec::with_capacity(rows.len());
    for (i, (line, r)) in rows.iter().enumerate() {
        labels.push(match r[0].as_str() {
            "e" => 0,
            "p" => 1,
            other => {
                return Err(Error::corrupt(path, format!("line {line}: unknown class {other:?}")))
            }
        });
        for (c, v) in r[1..].iter().enumerate() {
            let j = values[c].binary_search(v).unwrap();
            features[i * n_features + offsets[c] + j] = 1.0;
        }
    }
    if labels.is_empty() {
        return Err(Error::corrupt(path, "no samples"));
    }
    Ok(Dataset {
        name: "mushroom".into(),
        n_features,
        n_classes: 2,
        features,
        labels,
        train: vec![],
        test: vec![],
        norm: "onehot".into(),
    })
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Raw IDX bytes with gzip inflated when the file starts with the gzip magic.
fn read_idx_bytes(path: &Path, checksums: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let raw = read_checked(path, checksums)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::corrupt(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| {
            Error::corrupt(
                path,
                format!("truncated header at byte offset {}", bytes.len().min(offset)),
            )
        })
}

/// Parses an IDX image file into `(count, rows * cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES {
        return Err(Error::corrupt(path, format!("bad image magic {magic:#010x} at byte offset 0")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let len = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(Error::corrupt(
            path,
            format!(
                "truncated at byte offset {}: {} pixel bytes expected, file ends after {}",
                bytes.len(),
                len,
                body.len()
            ),
        ));
    }
    if body.len() > len {
        return Err(Error::corrupt(path, format!("trailing data at byte offset {}", 16 + len)));
    }
    Ok((count, rows * cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS {
        return Err(Error::corrupt(path, format!("bad label magic {magic:#010x} at byte offset 0")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::corrupt(
            path,
            format!(
                "truncated at byte offset {}: {count} labels expected, file ends after {}",
                bytes.len(),
                body.len()
            ),
        ));
    }
    if body.len() > count {
        return Err(Error::corrupt(path, format!("trailing data at byte offset {}", 8 + count)));
    }
    Ok(body.to_vec())
}

/// Finds `stem` or `stem.gz` in `dir`.
fn idx_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
    ))
}

/// Reads the standard four IDX files. Training images come first; the
/// 10000-image test file forms the test split.
pub fn read_idx_dir(name: &str, dir: &Path, checksums: &BTreeMap<String, String>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = 0;
    let mut split = [0usize; 2];
    for (i, prefix) in ["train", "t10k"].into_iter().enumerate() {
        let ip = idx_file(dir, &format!("{prefix}-images-idx3-ubyte"))?;
        let lp = idx_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
        let (count, dim, pixels) = parse_idx_images(&read_idx_bytes(&ip, checksums)?, &ip)?;
        let l = parse_idx_labels(&read_idx_bytes(&lp, checksums)?, &lp)?;
        if l.len() != count {
            return Err(Error::corrupt(
                &lp,
                format!("{} labels for {count} images", l.len()),
            ));
        }
        if n_features != 0 && dim != n_features {
            return Err(Error::corrupt(&ip, format!("image size {dim} differs from {n_features}")));
        }
        n_features = dim;
        features.extend(pixels.iter().map(|&p| p as f64 / 255.0));
        labels.extend(l.iter().map(|&c| c as u32));
        split[i] = count;
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    Ok(Dataset {
        name: name.to_string(),
        n_features,
        n_classes,
        features,
        labels,
        train: (0..split[0]).collect(),
        test: (split[0]..split[0] + split[1]).collect(),
        norm: "pixel/255".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES, count, 2, 2] {
            v.extend(x.to_be_bytes());
        }
        v.extend(pixels);
        v
    }

    #[test]
    fn idx_images_parse_and_truncation() {
        let p = Path::new("x.idx");
        let ok = images(2, &[0, 255, 1, 2, 3, 4, 5, 6]);
        let (count, dim, px) = parse_idx_images(&ok, p).unwrap();
        assert_eq!((count, dim, px.len()), (2, 4, 8));
        let err = parse_idx_images(&ok[..20], p).unwrap_err().to_string();
        assert!(err.contains("byte offset 20"), "{err}");
        let err = parse_idx_images(&ok[..6], p).unwrap_err().to_string();
        assert!(err.contains("byte offset"), "{err}");
        let mut bad = ok.clone();
        bad[3] = 1;
        assert!(parse_idx_images(&bad, p).is_err());
    }

    #[test]
    fn idx_labels() {
        let p = Path::new("l.idx");
        let mut v = Vec::new();
        v.extend(IDX_LABELS.to_be_bytes());
        v.extend(3u32.to_be_bytes());
        v.extend([1, 2, 3]);
        assert_eq!(parse_idx_labels(&v, p).unwrap(), vec![1, 2, 3]);
        assert!(parse_idx_labels(&v[..10], p).unwrap_err().to_string().contains("byte offset 10"));
    }

    #[test]
    fn iris_rows() {
        let csv = b"5.1,3.5,1.4,0.2,Iris-setosa\n7.0,3.2,4.7,1.4,Iris-versicolor\n\n6.3,3.3,6.0,2.5,Iris-virginica\n";
        let d = read_iris(csv, Path::new("iris.data")).unwrap();
        assert_eq!((d.len(), d.n_features, d.n_classes), (3, 4, 3));
        assert_eq!(d.labels, vec![0, 1, 2]);
        assert!(d.features.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(read_iris(b"1,2,3,Iris-setosa\n", Path::new("i")).is_err());
        assert!(read_iris(b"1,2,x,4,Iris-setosa\n", Path::new("i")).is_err());
    }

    #[test]
    fn mushroom_one_hot() {
        let row = |c: &str, v: &str| format!("{c},{}\n", vec![v; 22].join(","));
        let csv = row("e", "a") + &row("p", "b") + &row("p", "?");
        let d = read_mushroom(csv.as_bytes(), Path::new("m")).unwrap();
        assert_eq!(d.n_features, 66);
        assert_eq!(d.labels, vec![0, 1, 1]);
        assert_eq!(d.sample(0).iter().sum::<f64>(), 22.0);
    }

    #[test]
    fn checksum_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("iris.data");
        std::fs::write(&p, b"5.1,3.5,1.4,0.2,Iris-setosa\n").unwrap();
        let mut sums = BTreeMap::new();
        sums.insert("iris.data".to_string(), "00".repeat(32));
        assert!(matches!(read_checked(&p, &sums), Err(Error::Checksum { .. })));
        sums.insert("iris.data".to_string(), sha256_hex(b"5.1,3.5,1.4,0.2,Iris-setosa\n"));
        assert!(read_checked(&p, &sums).is_ok());
    }
}
