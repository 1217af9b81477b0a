//! Benchmark loaders, preprocessing and the parity task.

use std::path::{Path, PathBuf};

use crate::error::{EdlaError, Result};
use crate::tensor::{Matrix, RngState};

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;
const CIFAR_RECORD: usize = 1 + 3072;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(t) => t.len(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Real(t) => Targets::Real(idx.iter().map(|&i| t[i]).collect()),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Real values, with class labels converted to `f64`.
    pub fn as_real(&self) -> Vec<f64> {
        match self {
            Targets::Real(t) => t.clone(),
            Targets::Classes(c) => c.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Targets::Classes(c) => Some(c),
            Targets::Real(_) => None,
        }
    }

    /// Sorted distinct class labels; empty for real targets.
    pub fn class_set(&self) -> Vec<usize> {
        let mut c = self.classes().map(<[usize]>::to_vec).unwrap_or_default();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Samples plus a train/test partition of their indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub targets: Targets,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub source: String,
}

/// One materialized side of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub x: Matrix,
    pub targets: Targets,
}

impl Dataset {
    /// Every sample in the training side, none held out.
    pub fn unsplit(name: &str, x: Matrix, targets: Targets, source: &str) -> Result<Self> {
        if x.rows() != targets.len() {
            return Err(EdlaError::Shape(format!(
                "{} rows and {} targets",
                x.rows(),
                targets.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            train_idx: (0..x.rows()).collect(),
            test_idx: Vec::new(),
            x,
            targets,
            source: source.into(),
        })
    }

    /// Stack a fixed train set on top of a fixed test set.
    pub fn fixed_split(name: &str, train: Dataset, test: Dataset) -> Result<Self> {
        if train.x.cols() != test.x.cols() {
            return Err(EdlaError::Shape("train and test feature counts differ".into()));
        }
        let (n_tr, n_te) = (train.x.rows(), test.x.rows());
        let cols = train.x.cols();
        let mut data = train.x.into_vec();
        data.extend(test.x.into_vec());
        let targets = match (train.targets, test.targets) {
            (Targets::Real(mut a), Targets::Real(b)) => {
                a.extend(b);
                Targets::Real(a)
            }
            (Targets::Classes(mut a), Targets::Classes(b)) => {
                a.extend(b);
                Targets::Classes(a)
            }
            _ => return Err(EdlaError::InvalidArgument("mixed target kinds".into())),
        };
        Ok(Self {
            name: name.into(),
            x: Matrix::from_vec(n_tr + n_te, cols, data)?,
            targets,
            train_idx: (0..n_tr).collect(),
            test_idx: (n_tr..n_tr + n_te).collect(),
            source: format!("{}; {}", train.source, test.source),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Replace the partition with a fresh random one.
    pub fn with_random_split(mut self, ratio: f64, rng: &mut RngState) -> Result<Self> {
        let (tr, te) = split_random(self.n_samples(), ratio, rng)?;
        self.train_idx = tr;
        self.test_idx = te;
        Ok(self)
    }

    /// Keep the first `n` training indices.
    pub fn truncate_train(mut self, n: usize) -> Self {
        self.train_idx.truncate(n);
        self
    }

    /// Materialize both sides. A contiguous train-then-test layout is split
    /// in place without copying.
    pub fn into_parts(self) -> Result<(Part, Part)> {
        let n_tr = self.train_idx.len();
        let contiguous = self.train_idx.iter().enumerate().all(|(k, &i)| k == i)
            && self.test_idx.iter().enumerate().all(|(k, &i)| k + n_tr == i)
            && n_tr + self.test_idx.len() == self.x.rows();
        if contiguous {
            let cols = self.x.cols();
            let mut data = self.x.into_vec();
            let test_data = data.split_off(n_tr * cols);
            let (tr_t, te_t) = match self.targets {
                Targets::Real(mut t) => {
                    let te = t.split_off(n_tr);
                    (Targets::Real(t), Targets::Real(te))
                }
                Targets::Classes(mut c) => {
                    let te = c.split_off(n_tr);
                    (Targets::Classes(c), Targets::Classes(te))
                }
            };
            let n_te = te_t.len();
            return Ok((
                Part {
                    x: Matrix::from_vec(n_tr, cols, data)?,
                    targets: tr_t,
                },
                Part {
                    x: Matrix::from_vec(n_te, cols, test_data)?,
                    targets: te_t,
                },
            ));
        }
        Ok((
            Part {
                x: self.x.select_rows(&self.train_idx),
                targets: self.targets.select(&self.train_idx),
            },
            Part {
                x: self.x.select_rows(&self.test_idx),
                targets: self.targets.select(&self.test_idx),
            },
        ))
    }
}

/// All `2^n_bit` bit patterns, most significant bit first; label 1 when the
/// number of ones is odd.
pub fn gen_parity(n_bit: usize) -> Result<Dataset> {
    if !(1..=20).contains(&n_bit) {
        return Err(EdlaError::InvalidArgument(format!(
            "n_bit must be in 1..=20, got {n_bit}"
        )));
    }
    let n = 1usize << n_bit;
    let x = Matrix::from_fn(n, n_bit, |i, b| ((i >> (n_bit - 1 - b)) & 1) as f64);
    let labels = (0..n).map(|i| (i.count_ones() % 2) as usize).collect();
    Dataset::unsplit(
        &format!("parity{n_bit}"),
        x,
        Targets::Classes(labels),
        "generated",
    )
}

/// Per-column affine map fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(EdlaError::InvalidArgument("cannot fit a scaler on no rows".into()));
        }
        let mut min = train.row(0).to_vec();
        let mut max = min.clone();
        for r in 1..train.rows() {
            for (c, &v) in train.row(r).iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// `(x - min) / (max - min)`; constant columns map to 0.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.min.len() {
            return Err(EdlaError::Shape(format!(
                "scaler fitted on {} columns applied to {}",
                self.min.len(),
                x.cols()
            )));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| {
            let span = self.max[c] - self.min[c];
            if span > 0.0 {
                (x.get(r, c) - self.min[c]) / span
            } else {
                0.0
            }
        }))
    }
}

/// Fit on `train`, scale both.
pub fn minmax_fit_apply(train: &Matrix, test: &Matrix) -> Result<(Matrix, Matrix, MinMaxScaler)> {
    let s = MinMaxScaler::fit(train)?;
    Ok((s.apply(train)?, s.apply(test)?, s))
}

/// Scale both parts with a scaler fitted on the training part.
pub fn minmax_parts(train: &mut Part, test: &mut Part) -> Result<MinMaxScaler> {
    let s = MinMaxScaler::fit(&train.x)?;
    train.x = s.apply(&train.x)?;
    test.x = s.apply(&test.x)?;
    Ok(s)
}

/// `floor(ratio * n)` training indices from a random permutation, the
/// rest for testing.
pub fn split_random(n: usize, ratio: f64, rng: &mut RngState) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EdlaError::InvalidArgument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut p = rng.permutation(n);
    let k = (ratio * n as f64).floor() as usize;
    let test = p.split_off(k);
    Ok((p, test))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| EdlaError::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parse an IDX image file: magic 2051, then count, rows, cols.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < 16 {
        return Err(EdlaError::format(path, "truncated IDX image header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(EdlaError::format(
            path,
            format!("bad IDX image magic {magic}, expected {IDX_IMAGES_MAGIC}"),
        ));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let features = rows * cols;
    let expected = 16 + n * features;
    if bytes.len() != expected {
        return Err(EdlaError::format(
            path,
            format!(
                "IDX image file holds {} bytes, header implies {expected}",
                bytes.len()
            ),
        ));
    }
    let data = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Matrix::from_vec(n, features, data)
}

/// Parse an IDX label file: magic 2049, then count.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    if bytes.len() < 8 {
        return Err(EdlaError::format(path, "truncated IDX label header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(EdlaError::format(
            path,
            format!("bad IDX label magic {magic}, expected {IDX_LABELS_MAGIC}"),
        ));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(EdlaError::format(
            path,
            format!("IDX label file holds {} bytes, header implies {}", bytes.len(), 8 + n),
        ));
    }
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

/// Images scaled by 1/255 and flattened row-major.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&read(images)?, images)?;
    let y = parse_idx_labels(&read(labels)?, labels)?;
    if x.rows() != y.len() {
        return Err(EdlaError::format(
            labels,
            format!("{} labels for {} images", y.len(), x.rows()),
        ));
    }
    Dataset::unsplit(
        "idx",
        x,
        Targets::Classes(y),
        &format!("{} + {}", images.display(), labels.display()),
    )
}

/// `train-images-idx3-ubyte` etc. in `dir`, with the fixed 60k/10k split.
pub fn load_mnist_dir(dir: &Path) -> Result<Dataset> {
    let f = |n: &str| dir.join(n);
    let train = load_idx(&f("train-images-idx3-ubyte"), &f("train-labels-idx1-ubyte"))?;
    let test = load_idx(&f("t10k-images-idx3-ubyte"), &f("t10k-labels-idx1-ubyte"))?;
    Dataset::fixed_split("mnist", train, test)
}

/// Parse CIFAR-10 binary records: one label byte then 3072 pixel bytes.
pub fn parse_cifar10(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(EdlaError::format(
            path,
            format!(
                "{} bytes is not a whole number of {CIFAR_RECORD}-byte records",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut x = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut y = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(EdlaError::format(
                path,
                format!("record {i} has label {}", rec[0]),
            ));
        }
        y.push(usize::from(rec[0]));
        x.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((x, y))
}

/// Concatenate CIFAR-10 batch files.
pub fn load_cifar10_bin(paths: &[PathBuf]) -> Result<Dataset> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for p in paths {
        let (bx, by) = parse_cifar10(&read(p)?, p)?;
        x.extend(bx);
        y.extend(by);
    }
    let n = y.len();
    Dataset::unsplit(
        "cifar10",
        Matrix::from_vec(n, CIFAR_RECORD - 1, x)?,
        Targets::Classes(y),
        &format!("{} batch files", paths.len()),
    )
}

/// `data_batch_1.bin`..`data_batch_5.bin` and `test_batch.bin` in `dir`.
pub fn load_cifar10_dir(dir: &Path) -> Result<Dataset> {
    let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let train = load_cifar10_bin(&train)?;
    let test = load_cifar10_bin(&[dir.join("test_batch.bin")])?;
    Dataset::fixed_split("cifar10", train, test)
}

/// Which columns of a delimited file hold features and target.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub name: String,
    pub n_columns: usize,
    pub features: Vec<usize>,
    pub target: usize,
    /// Features are divided by this value when set.
    pub feature_divisor: Option<f64>,
    /// Target is a class label rather than a real value.
    pub class_target: bool,
}

impl ColumnMap {
    /// `airfoil_self_noise.dat`: 5 features, sound pressure level last.
    pub fn airfoil() -> Self {
        Self::regression("airfoil", 6, 5)
    }

    /// Concrete compressive strength: 8 features, strength last.
    pub fn concrete() -> Self {
        Self::regression("concrete", 9, 8)
    }

    /// Energy efficiency: 8 features, heating load (column 8), cooling load ignored.
    pub fn energy() -> Self {
        Self::regression("energy", 10, 8)
    }

    /// 8x8 digits: 64 pixel counts in 0..=16, label last, features divided by 16.
    pub fn digits() -> Self {
        Self {
            name: "digits".into(),
            n_columns: 65,
            features: (0..64).collect(),
            target: 64,
            feature_divisor: Some(16.0),
            class_target: true,
        }
    }

    fn regression(name: &str, n_columns: usize, n_features: usize) -> Self {
        Self {
            name: name.into(),
            n_columns,
            features: (0..n_features).collect(),
            target: n_features,
            feature_divisor: None,
            class_target: false,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "airfoil" => Some(Self::airfoil()),
            "concrete" => Some(Self::concrete()),
            "energy" => Some(Self::energy()),
            "digits" => Some(Self::digits()),
            _ => None,
        }
    }
}

fn split_line(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else if line.contains(';') {
        line.split(';').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parse comma-, semicolon-, tab- or space-delimited numeric text. A first
/// line that is not entirely numeric is taken as a header; blank lines are
/// skipped. Errors carry 1-based line numbers.
pub fn parse_csv_numeric(text: &str, map: &ColumnMap, path: &Path) -> Result<Dataset> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells = split_line(line);
        let parsed: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => {
                let bad = cells.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or(&"");
                return Err(EdlaError::format(
                    path,
                    format!("line {line_no}: non-numeric cell '{bad}'"),
                ));
            }
        };
        first = false;
        if row.len() != map.n_columns {
            return Err(EdlaError::format(
                path,
                format!(
                    "line {line_no}: {} columns, expected {}",
                    row.len(),
                    map.n_columns
                ),
            ));
        }
        let div = map.feature_divisor.unwrap_or(1.0);
        x.extend(map.features.iter().map(|&c| row[c] / div));
        let t = row[map.target];
        if map.class_target && (t < 0.0 || t.fract() != 0.0) {
            return Err(EdlaError::format(
                path,
                format!("line {line_no}: class label {t} is not a non-negative integer"),
            ));
        }
        y.push(t);
    }
    if y.is_empty() {
        return Err(EdlaError::format(path, "no data rows"));
    }
    let targets = if map.class_target {
        Targets::Classes(y.iter().map(|&t| t as usize).collect())
    } else {
        Targets::Real(y)
    };
    Dataset::unsplit(
        &map.name,
        Matrix::from_vec(targets.len(), map.features.len(), x)?,
        targets,
        &path.display().to_string(),
    )
}

pub fn load_csv_numeric(path: &Path, map: &ColumnMap) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| EdlaError::io(path, e))?;
    parse_csv_numeric(&text, map, path)
}
