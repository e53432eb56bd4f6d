//! Labelled datasets: the embedded 8x8 digits set, synthetic generators, and
//! CSV / IDX ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

const DIGITS_CSV: &str = include_str!("../data/digits.csv");

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dim("dataset", features.shape(), (labels.len(), 1)));
        }
        if labels.is_empty() {
            return Err(Error::Input("dataset is empty".into()));
        }
        if !features.all_finite() {
            return Err(Error::Input("dataset features must be finite".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            classes: self.classes,
        }
    }
}

/// The 1797-sample, 10-class 8x8 handwritten digits set, pixels scaled to [0, 1].
pub fn digits() -> Dataset {
    let mut d = parse_csv(DIGITS_CSV.as_bytes(), "digits").expect("embedded digits set is valid");
    d.features.scale_in_place(1.0 / 16.0);
    d
}

/// Isotropic Gaussian clusters with class centres drawn from N(0, 1) per coordinate.
pub fn gaussian_mixture(classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || dim == 0 || per_class == 0 || !(spread > 0.0) {
        return Err(Error::Config("gaussian mixture needs positive sizes and spread".into()));
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, spread).map_err(|e| Error::Config(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let c = i % classes;
        data.extend(centres[c].iter().map(|m| m + noise.sample(&mut rng)));
        labels.push(c);
    }
    Dataset::new("gaussian_mixture", Matrix::from_vec(labels.len(), dim, data)?, labels)
}

/// Two linearly separable 2-D blobs centred at (-2, -2) and (2, 2), unit spread,
/// with points closer than `margin` to the separator `x + y = 0` redrawn.
pub fn blobs(n: usize, margin: f64, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { -2.0 } else { 2.0 };
        loop {
            let x = centre + normal.sample(&mut rng);
            let y = centre + normal.sample(&mut rng);
            let side = (x + y) / 2f64.sqrt();
            if (c == 1 && side > margin) || (c == 0 && side < -margin) {
                data.extend([x, y]);
                break;
            }
        }
        labels.push(c);
    }
    Dataset::new("blobs", Matrix::from_vec(n, 2, data).unwrap(), labels).unwrap()
}

/// Reads a CSV with a header row. The column named `label` holds integer class
/// indices; every other column is a real feature.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
    parse_csv(file, &name)
}

fn parse_csv(input: impl std::io::Read, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(csv_err)?.clone();
    let label_col = header
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Format("CSV has no `label` column".into()))?;
    let width = header.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if j == label_col {
                let l = field
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("row {}: label `{field}` is not a class index", i + 1)))?;
                labels.push(l);
            } else {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", i + 1)))?;
                data.push(v);
            }
        }
    }
    Dataset::new(name, Matrix::from_vec(labels.len(), width, data)?, labels)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads an IDX image file (unsigned bytes, any number of dimensions) and its
/// IDX label file. Pixels are scaled to [0, 1] and flattened per sample.
pub fn read_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = std::fs::read(images)?;
    let lab = std::fs::read(labels)?;
    let (img_dims, img_data) = parse_idx(&img)?;
    let (lab_dims, lab_data) = parse_idx(&lab)?;
    if lab_dims.len() != 1 || img_dims[0] != lab_dims[0] {
        return Err(Error::Format(format!(
            "IDX images {img_dims:?} and labels {lab_dims:?} disagree"
        )));
    }
    let n = img_dims[0];
    let width: usize = img_dims[1..].iter().product();
    let features = Matrix::from_vec(n, width, img_data.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    let name = images.file_stem().map_or("idx".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, lab_data.iter().map(|&b| usize::from(b)).collect())
}

fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format("not an IDX file".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndim = usize::from(bytes[3]);
    let head = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < head {
        return Err(Error::Format("truncated IDX header".into()));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() != head + count {
        return Err(Error::Format(format!(
            "IDX payload has {} bytes, header declares {count}",
            bytes.len() - head
        )));
    }
    Ok((dims, &bytes[head..]))
}

/// Shuffled indices `0..n`.
pub fn permutation(n: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_shape() {
        let d = digits();
        assert_eq!(d.len(), 1797);
        assert_eq!(d.dim(), 64);
        assert_eq!(d.classes, 10);
        assert!(d.features.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn csv_label_column_anywhere() {
        let d = parse_csv("label,a,b\n1,0.5,2\n0,-1,3\n".as_bytes(), "t").unwrap();
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.features, Matrix::from_rows(&[&[0.5, 2.0], &[-1.0, 3.0]]));
        assert!(parse_csv("a,b\n1,2\n".as_bytes(), "t").is_err());
        assert!(parse_csv("a,label\nx,1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn idx_roundtrip() {
        let dir = std::env::temp_dir().join(format!("ratact-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1];
        img.extend([0u8, 255, 51, 102]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        std::fs::write(dir.join("i.idx"), &img).unwrap();
        std::fs::write(dir.join("l.idx"), &lab).unwrap();
        let d = read_idx(&dir.join("i.idx"), &dir.join("l.idx")).unwrap();
        assert_eq!(d.labels, vec![7, 3]);
        assert_eq!(d.features.row(0), &[0.0, 1.0]);
        assert!((d.features[(1, 1)] - 0.4).abs() < 1e-15);
        std::fs::write(dir.join("bad.idx"), &img[..10]).unwrap();
        assert!(read_idx(&dir.join("bad.idx"), &dir.join("l.idx")).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gaussian_mixture(3, 4, 5, 0.5, 9).unwrap(), gaussian_mixture(3, 4, 5, 0.5, 9).unwrap());
        let b = blobs(40, 0.5, 1);
        assert_eq!(b.class_counts(), vec![20, 20]);
        for r in 0..b.len() {
            let s = b.features[(r, 0)] + b.features[(r, 1)];
            assert_eq!(s > 0.0, b.labels[r] == 1);
        }
    }

    #[test]
    fn permutation_is_bijective() {
        let mut rng = seed::rng(3);
        let mut p = permutation(50, &mut rng);
        p.sort();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
