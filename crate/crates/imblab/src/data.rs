//! Imbalanced training sets and balanced test sets.
//!
//! Class sizes follow one of two protocols: long-tailed, where counts
//! decay exponentially from the head class to the tail, and step, where
//! the head half keeps the full count and the tail half is shrunk by
//! the imbalance ratio `rho = N_1 / N_C`. Features are drawn from an
//! isotropic Gaussian mixture, one component per class.
//!
//! Datasets are canonicalized at construction: classes are relabeled so
//! counts are nonincreasing (`N_1 >= ... >= N_C`), which every
//! downstream formula assumes.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Shape of the class-size profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceKind {
    /// Counts decay exponentially: `N_y = N_1 * rho^{-y/(C-1)}`.
    LongTailed,
    /// The head `ceil(C/2)` classes keep `N_1`; the rest get `N_1/rho`.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub kind: ImbalanceKind,
    pub num_classes: usize,
    pub head_count: usize,
    pub imbalance_ratio: f64,
}

/// Per-class sample counts for a profile. Counts are nonincreasing and
/// clamped to at least 1 so every prior stays positive.
pub fn class_counts(profile: &ImbalanceProfile) -> Result<Vec<usize>> {
    let c = profile.num_classes;
    let rho = profile.imbalance_ratio;
    if c < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {c}")));
    }
    if profile.head_count < 1 {
        return Err(Error::invalid("head count must be at least 1"));
    }
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::invalid(format!(
            "imbalance ratio must be finite and at least 1, got {rho}"
        )));
    }
    let n1 = profile.head_count as f64;
    let counts = match profile.kind {
        ImbalanceKind::LongTailed => (0..c)
            .map(|y| {
                let frac = y as f64 / (c - 1) as f64;
                (n1 * rho.powf(-frac)).round().max(1.0) as usize
            })
            .collect(),
        ImbalanceKind::Step => {
            let head = c.div_ceil(2);
            let tail_count = (n1 / rho).round().max(1.0) as usize;
            (0..c)
                .map(|y| {
                    if y < head {
                        profile.head_count
                    } else {
                        tail_count
                    }
                })
                .collect()
        }
    };
    Ok(counts)
}

/// Isotropic Gaussian mixture: one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    /// `C x d` component means.
    pub class_means: Matrix,
    /// Isotropic standard deviation, `> 0`.
    pub covariance_scale: f64,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.covariance_scale > 0.0) || !self.covariance_scale.is_finite() {
            return Err(Error::invalid(format!(
                "covariance scale must be positive, got {}",
                self.covariance_scale
            )));
        }
        if !self.class_means.is_finite() {
            return Err(Error::invalid("class means must be finite"));
        }
        Ok(())
    }

    /// Sample class means from a standard Gaussian scaled by
    /// `mean_scale`, deterministically from `seed`.
    pub fn with_random_means(
        num_classes: usize,
        dim: usize,
        mean_scale: f64,
        covariance_scale: f64,
        root_seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 || dim == 0 {
            return Err(Error::invalid("need at least 2 classes and 1 feature"));
        }
        let mut rng = seed::rng(root_seed, "means", 0);
        let mut means = Matrix::zeros(num_classes, dim);
        for v in means.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = mean_scale * z;
        }
        let spec = GaussianMixtureSpec {
            class_means: means,
            covariance_scale,
            seed: root_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Feature matrix plus labels and derived class statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    priors: Vec<f64>,
}

impl LabeledDataset {
    /// Build a dataset, relabeling classes so counts are nonincreasing.
    /// Returns the dataset and the relabeling map (`map[old] = new`).
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<(Self, Vec<usize>)> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if !features.is_finite() {
            return Err(Error::invalid("features must be finite"));
        }
        let mut raw_counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::invalid(format!(
                    "label {y} at sample {i} out of range for {num_classes} classes"
                )));
            }
            raw_counts[y] += 1;
        }
        if let Some(y) = raw_counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {y} has no samples")));
        }

        // Stable sort by count, descending; ties keep original order.
        let mut order: Vec<usize> = (0..num_classes).collect();
        order.sort_by(|&a, &b| raw_counts[b].cmp(&raw_counts[a]).then(a.cmp(&b)));
        let mut relabel = vec![0usize; num_classes];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }

        let labels: Vec<usize> = labels.iter().map(|&y| relabel[y]).collect();
        let class_counts: Vec<usize> = order.iter().map(|&old| raw_counts[old]).collect();
        let n = labels.len() as f64;
        let priors = class_counts.iter().map(|&c| c as f64 / n).collect();
        Ok((
            LabeledDataset {
                features,
                labels,
                class_counts,
                priors,
            },
            relabel,
        ))
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Head-to-tail count ratio `N_1 / N_C`.
    pub fn rho(&self) -> f64 {
        self.class_counts[0] as f64 / *self.class_counts.last().expect("nonempty") as f64
    }
}

/// Draw `counts[y]` points from component `y` of the mixture. Counts
/// must already be nonincreasing so labels stay canonical.
pub fn generate(spec: &GaussianMixtureSpec, counts: &[usize]) -> Result<LabeledDataset> {
    spec.validate()?;
    let c = spec.class_means.rows();
    let d = spec.class_means.cols();
    if counts.len() != c {
        return Err(Error::invalid(format!(
            "{} counts for {} mixture components",
            counts.len(),
            c
        )));
    }
    if counts.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("counts must be nonincreasing"));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("counts must be at least 1"));
    }
    let n: usize = counts.iter().sum();
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut rng = seed::rng(spec.seed, "draws", 0);
    let mut row = 0;
    for (y, &count) in counts.iter().enumerate() {
        let mean = spec.class_means.row(y).to_vec();
        for _ in 0..count {
            let out = features.row_mut(row);
            for (j, m) in mean.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                out[j] = m + spec.covariance_scale * z;
            }
            labels.push(y);
            row += 1;
        }
    }
    let (dataset, relabel) = LabeledDataset::new(features, labels, c)?;
    debug_assert!(relabel.iter().enumerate().all(|(i, &m)| i == m));
    Ok(dataset)
}

/// Draw exactly `per_class` points per component using `seed` in place
/// of the spec's own seed, so test draws never overlap training draws.
pub fn generate_balanced_test(
    spec: &GaussianMixtureSpec,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class < 1 {
        return Err(Error::invalid("per-class count must be at least 1"));
    }
    let test_spec = GaussianMixtureSpec {
        class_means: spec.class_means.clone(),
        covariance_scale: spec.covariance_scale,
        seed,
    };
    generate(&test_spec, &vec![per_class; spec.class_means.rows()])
}

/// Sidecar manifest written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn for_dataset(dataset: &LabeledDataset, seed: u64) -> Self {
        DatasetManifest {
            n: dataset.n(),
            d: dataset.dim(),
            c: dataset.num_classes(),
            counts: dataset.class_counts().to_vec(),
            seed,
        }
    }
}

/// Write a dataset in the CSV contract: header `f0,...,f{d-1},label`,
/// shortest round-trip float formatting.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..dataset.dim())
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(file, "{}", header.join(","))?;
    for i in 0..dataset.n() {
        let mut fields: Vec<String> = dataset.feature(i).iter().map(|v| format!("{v}")).collect();
        fields.push(dataset.labels()[i].to_string());
        writeln!(file, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Read a dataset CSV. `declared_classes` fixes the class count when a
/// manifest is available; otherwise it is inferred as `max label + 1`.
/// Classes are relabeled to canonical order; the map is returned.
pub fn load_csv(
    path: &Path,
    declared_classes: Option<usize>,
) -> Result<(LabeledDataset, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().next_back() != Some("label") {
        return Err(Error::Parse {
            row: 1,
            message: "last column of the header must be `label`".into(),
        });
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::Parse {
            row: 1,
            message: "no feature columns".into(),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // header is row 1
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::Parse {
                row: row_no,
                message: format!("expected {} fields, got {}", dim + 1, record.len()),
            });
        }
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let v: f64 = record[j]
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: row_no,
                    message: format!("field f{j} `{}` is not a finite real number", &record[j]),
                })?;
            features.push(v);
        }
        let label: usize = record[dim].trim().parse().map_err(|_| Error::Parse {
            row: row_no,
            message: format!("label `{}` is not a nonnegative integer", &record[dim]),
        })?;
        if let Some(c) = declared_classes {
            if label >= c {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("label {label} out of range for {c} declared classes"),
                });
            }
        }
        rows.push(features);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no data rows".into(),
        });
    }
    let num_classes =
        declared_classes.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0) + 1);
    LabeledDataset::new(Matrix::from_rows(&rows), labels, num_classes)
}

/// A shuffled partition of `[0, N)` into `ceil(N/m)` blocks; the last
/// block may be short. Deterministic given `epoch_seed`.
pub fn minibatches(
    dataset: &LabeledDataset,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = dataset.n();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} out of range for {n} samples"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(epoch_seed, "shuffle", 0);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lt_profile(c: usize, head: usize, rho: f64) -> ImbalanceProfile {
        ImbalanceProfile {
            kind: ImbalanceKind::LongTailed,
            num_classes: c,
            head_count: head,
            imbalance_ratio: rho,
        }
    }

    fn small_spec(seed: u64) -> GaussianMixtureSpec {
        GaussianMixtureSpec {
            class_means: Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 3.0]]),
            covariance_scale: 1.0,
            seed,
        }
    }

    #[test]
    fn long_tailed_counts_match_protocol() {
        let counts = class_counts(&lt_profile(10, 5000, 100.0)).unwrap();
        assert_eq!(counts[0], 5000);
        assert_eq!(counts[9], 50);
        assert!(counts.windows(2).all(|w| w[0] > w[1]));
        let ratio = counts[0] as f64 / counts[9] as f64;
        assert!((ratio - 100.0).abs() <= 100.0 / 50.0, "ratio {ratio}");
    }

    #[test]
    fn step_counts_match_protocol() {
        let counts = class_counts(&ImbalanceProfile {
            kind: ImbalanceKind::Step,
            num_classes: 10,
            head_count: 5000,
            imbalance_ratio: 100.0,
        })
        .unwrap();
        assert_eq!(&counts[..5], &[5000; 5]);
        assert_eq!(&counts[5..], &[50; 5]);
    }

    #[test]
    fn step_puts_extra_class_in_head_for_odd_c() {
        let counts = class_counts(&ImbalanceProfile {
            kind: ImbalanceKind::Step,
            num_classes: 5,
            head_count: 100,
            imbalance_ratio: 10.0,
        })
        .unwrap();
        assert_eq!(counts, vec![100, 100, 100, 10, 10]);
    }

    #[test]
    fn balanced_ratio_degenerates() {
        let counts = class_counts(&lt_profile(6, 40, 1.0)).unwrap();
        assert_eq!(counts, vec![40; 6]);
    }

    #[test]
    fn counts_clamped_to_one() {
        let counts = class_counts(&lt_profile(10, 5, 1000.0)).unwrap();
        assert!(counts.iter().all(|&n| n >= 1));
        assert_eq!(*counts.last().unwrap(), 1);
    }

    #[test]
    fn class_counts_rejects_bad_profiles() {
        assert!(class_counts(&lt_profile(1, 100, 10.0)).is_err());
        assert!(class_counts(&lt_profile(4, 100, 0.5)).is_err());
    }

    #[test]
    fn generate_bookkeeping() {
        let ds = generate(&small_spec(1), &[3, 2]).unwrap();
        assert_eq!(ds.n(), 5);
        assert_eq!(ds.class_counts(), &[3, 2]);
        assert_eq!(ds.priors(), &[0.6, 0.4]);
        assert_eq!(ds.labels(), &[0, 0, 0, 1, 1]);
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(&small_spec(42), &[4, 2]).unwrap();
        let b = generate(&small_spec(42), &[4, 2]).unwrap();
        assert_eq!(a, b);
        let c = generate(&small_spec(43), &[4, 2]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_sigma_collapses_to_means() {
        let spec = GaussianMixtureSpec {
            covariance_scale: 1e-300,
            ..small_spec(7)
        };
        let ds = generate(&spec, &[2, 2]).unwrap();
        for i in 0..2 {
            assert!((ds.feature(i)[0] - 0.0).abs() < 1e-280);
        }
        for i in 2..4 {
            assert!((ds.feature(i)[0] - 3.0).abs() < 1e-280);
        }
    }

    #[test]
    fn empirical_means_converge() {
        let spec = small_spec(9);
        let ds = generate(&spec, &[10_000, 10_000]).unwrap();
        let tol = 5.0 * spec.covariance_scale / (10_000f64).sqrt();
        for class in 0..2 {
            for j in 0..2 {
                let (sum, count) = ds
                    .labels()
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y == class)
                    .fold((0.0, 0usize), |(s, k), (i, _)| {
                        (s + ds.feature(i)[j], k + 1)
                    });
                let mean = sum / count as f64;
                let target = spec.class_means.get(class, j);
                assert!(
                    (mean - target).abs() < tol,
                    "class {class} coord {j}: {mean} vs {target}"
                );
            }
        }
    }

    #[test]
    fn balanced_test_has_uniform_priors() {
        let ds = generate_balanced_test(&small_spec(3), 4, 99).unwrap();
        assert_eq!(ds.n(), 8);
        assert_eq!(ds.priors(), &[0.5, 0.5]);
        // Different seed stream from training draws.
        let train = generate(&small_spec(3), &[4, 4]).unwrap();
        assert_ne!(train.features().data(), ds.features().data());
        // One sample per class is the smallest balanced set.
        let tiny = generate_balanced_test(&small_spec(3), 1, 99).unwrap();
        assert_eq!(tiny.class_counts(), &[1, 1]);
        assert!(generate_balanced_test(&small_spec(3), 0, 99).is_err());
    }

    #[test]
    fn new_relabels_to_nonincreasing_counts() {
        let features = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        // Class 1 outnumbers class 0, so they swap.
        let (ds, map) = LabeledDataset::new(features, vec![0, 1, 1], 2).unwrap();
        assert_eq!(map, vec![1, 0]);
        assert_eq!(ds.labels(), &[1, 0, 0]);
        assert_eq!(ds.class_counts(), &[2, 1]);
    }

    #[test]
    fn new_rejects_empty_class_and_bad_labels() {
        let features = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(LabeledDataset::new(features.clone(), vec![0, 0], 2).is_err());
        assert!(LabeledDataset::new(features, vec![0, 5], 2).is_err());
    }

    #[test]
    fn csv_round_trip_is_identity_in_canonical_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = generate(&small_spec(12), &[3, 2]).unwrap();
        save_csv(&ds, &path).unwrap();
        let (back, map) = load_csv(&path, Some(2)).unwrap();
        assert_eq!(map, vec![0, 1]);
        assert_eq!(ds, back);
    }

    #[test]
    fn load_csv_relabels_and_records_the_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swap.csv");
        // Class 1 outnumbers class 0, so ingestion swaps them.
        std::fs::write(&path, "f0,label\n1.0,0\n2.0,1\n3.0,1\n").unwrap();
        let (ds, map) = load_csv(&path, Some(2)).unwrap();
        assert_eq!(map, vec![1, 0]);
        assert_eq!(ds.labels(), &[1, 0, 0]);
        assert_eq!(ds.class_counts(), &[2, 1]);
    }

    #[test]
    fn load_csv_reports_offending_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,f1,label\n1.0,2.0,0\n1.0,2.0,7\n").unwrap();
        match load_csv(&path, Some(3)) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_ragged_and_non_numeric_rows() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "f0,f1,label\n1.0,0\n").unwrap();
        assert!(matches!(
            load_csv(&ragged, None),
            Err(Error::Parse { row: 2, .. })
        ));

        let text = dir.path().join("text.csv");
        std::fs::write(&text, "f0,label\nabc,0\n1.0,1\n").unwrap();
        assert!(matches!(
            load_csv(&text, None),
            Err(Error::Parse { row: 2, .. })
        ));

        let non_finite = dir.path().join("inf.csv");
        std::fs::write(&non_finite, "f0,label\n1.0,0\ninf,1\n").unwrap();
        assert!(matches!(
            load_csv(&non_finite, None),
            Err(Error::Parse { row: 3, .. })
        ));

        let float_label = dir.path().join("float_label.csv");
        std::fs::write(&float_label, "f0,label\n1.0,0.5\n1.0,1\n").unwrap();
        assert!(matches!(
            load_csv(&float_label, None),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn load_csv_accepts_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crlf.csv");
        std::fs::write(&path, "f0,label\r\n1.0,0\r\n2.0,1\r\n").unwrap();
        let (ds, _) = load_csv(&path, None).unwrap();
        assert_eq!(ds.n(), 2);
    }

    #[test]
    fn minibatch_shapes_and_determinism() {
        let ds = generate(&small_spec(5), &[3, 2]).unwrap();
        let blocks = minibatches(&ds, 2, 77).unwrap();
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        let mut seen: Vec<usize> = blocks.concat();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(blocks, minibatches(&ds, 2, 77).unwrap());
        assert_ne!(blocks, minibatches(&ds, 2, 78).unwrap());
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let ds = generate(&small_spec(5), &[3, 2]).unwrap();
        let blocks = minibatches(&ds, 5, 1).unwrap();
        assert_eq!(blocks.len(), 1);
        let mut ix = blocks[0].clone();
        ix.sort_unstable();
        assert_eq!(ix, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn minibatches_rejects_bad_sizes() {
        let ds = generate(&small_spec(5), &[3, 2]).unwrap();
        assert!(minibatches(&ds, 0, 1).is_err());
        assert!(minibatches(&ds, 6, 1).is_err());
    }
}
