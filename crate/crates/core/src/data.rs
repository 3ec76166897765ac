//! Dataset ingestion and preparation: schema-driven CSV loading with one-hot
//! encoding, deterministic splits, train-statistics standardization, and
//! synthetic generators for property tests and the shipped credit corpus.

use crate::error::{Error, Result};
use crate::net::Sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::Path;

/// Encoded samples plus the metadata needed to interpret and reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_names: Vec<String>,
    class_count: usize,
    provenance: String,
    label_mapping: Vec<String>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        feature_names: Vec<String>,
        class_count: usize,
        provenance: String,
        label_mapping: Vec<String>,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Config(format!(
                "dataset needs at least 2 classes, got {class_count}"
            )));
        }
        if label_mapping.len() != class_count {
            return Err(Error::Config(format!(
                "label mapping has {} entries for {class_count} classes",
                label_mapping.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != feature_names.len() {
                return Err(Error::Shape(format!(
                    "sample {i} has {} features, expected {}",
                    s.x.len(),
                    feature_names.len()
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("sample {i} has a non-finite feature")));
            }
            if s.y >= class_count {
                return Err(Error::Index(format!(
                    "sample {i} label {} exceeds class count {class_count}",
                    s.y
                )));
            }
        }
        Ok(Dataset {
            samples,
            feature_names,
            class_count,
            provenance,
            label_mapping,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        self.samples.as_slice()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Original label strings, indexed by class id.
    pub fn label_mapping(&self) -> &[String] {
        &self.label_mapping
    }

    fn subset(&self, indices: &[usize], tag: &str) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            class_count: self.class_count,
            provenance: format!("{}[{tag}]", self.provenance),
            label_mapping: self.label_mapping.clone(),
        }
    }
}

/// Role of one CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

/// One column declaration: name, role, and optionally the pinned category
/// levels. Pinned levels make unseen categories an error instead of a new
/// feature, keeping encodings stable across files.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub levels: Option<Vec<String>>,
}

/// Column roles and parsing options for a delimited text file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub delimiter: String,
    pub has_header: bool,
    #[serde(rename = "column")]
    pub columns: Vec<ColumnSpec>,
}

impl CsvSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: CsvSchema =
            toml::from_str(text).map_err(|e| Error::Parse(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.delimiter.len() != 1 || !self.delimiter.is_ascii() {
            return Err(Error::Config(format!(
                "delimiter must be one ascii character, got {:?}",
                self.delimiter
            )));
        }
        if self.columns.is_empty() {
            return Err(Error::Config("schema declares no columns".into()));
        }
        let labels = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Label)
            .count();
        if labels != 1 {
            return Err(Error::Config(format!(
                "schema must declare exactly one label column, got {labels}"
            )));
        }
        for c in &self.columns {
            if c.levels.is_some() && c.kind != ColumnKind::Categorical {
                return Err(Error::Config(format!(
                    "column {} pins levels but is not categorical",
                    c.name
                )));
            }
        }
        Ok(())
    }

    fn delimiter_byte(&self) -> u8 {
        self.delimiter.as_bytes()[0]
    }
}

pub fn load_schema<P: AsRef<Path>>(path: P) -> Result<CsvSchema> {
    CsvSchema::from_toml_str(&std::fs::read_to_string(path)?)
}

pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(&path)?;
    parse_csv(&text, schema, &path.as_ref().display().to_string())
}

/// Parses delimited text per the schema: numerics as f64, categoricals
/// one-hot over sorted levels, labels to 0-based indices over sorted distinct
/// values. Row numbers in errors are 1-based data rows (header excluded).
pub fn parse_csv(text: &str, schema: &CsvSchema, provenance: &str) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte())
        .has_headers(schema.has_header)
        .flexible(false)
        .from_reader(text.as_bytes());

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse_at(i + 1, e))?;
        if rec.len() != schema.columns.len() {
            return Err(Error::parse_at(
                i + 1,
                format!("expected {} fields, got {}", schema.columns.len(), rec.len()),
            ));
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }

    // Pass 1: category levels (where not pinned) and the label vocabulary.
    let mut inferred: Vec<Option<Vec<String>>> = vec![None; schema.columns.len()];
    let mut label_set: BTreeSet<String> = BTreeSet::new();
    for (j, col) in schema.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::Categorical if col.levels.is_none() => {
                let set: BTreeSet<String> =
                    rows.iter().map(|r| r[j].trim().to_string()).collect();
                inferred[j] = Some(set.into_iter().collect());
            }
            ColumnKind::Label => {
                label_set.extend(rows.iter().map(|r| r[j].trim().to_string()));
            }
            _ => {}
        }
    }
    let label_mapping: Vec<String> = label_set.into_iter().collect();
    if label_mapping.len() < 2 {
        return Err(Error::Parse(format!(
            "label column needs at least 2 distinct values, got {}",
            label_mapping.len()
        )));
    }

    let mut feature_names = Vec::new();
    for (j, col) in schema.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => feature_names.push(col.name.clone()),
            ColumnKind::Categorical => {
                let levels = col.levels.as_ref().or(inferred[j].as_ref()).expect("levels");
                for l in levels {
                    feature_names.push(format!("{}={}", col.name, l));
                }
            }
            ColumnKind::Label => {}
        }
    }

    // Pass 2: encode.
    let mut samples = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let mut x = Vec::with_capacity(feature_names.len());
        let mut y = 0usize;
        for (j, col) in schema.columns.iter().enumerate() {
            let raw = rec[j].trim();
            match col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::parse_at(row, format!("column {}: not a number: {raw:?}", col.name))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::parse_at(
                            row,
                            format!("column {}: non-finite value {raw:?}", col.name),
                        ));
                    }
                    x.push(v);
                }
                ColumnKind::Categorical => {
                    let levels = col.levels.as_ref().or(inferred[j].as_ref()).expect("levels");
                    let pos = levels.iter().position(|l| l == raw).ok_or_else(|| {
                        Error::Encoding(format!(
                            "row {row}, column {}: unknown category {raw:?}",
                            col.name
                        ))
                    })?;
                    let start = x.len();
                    x.resize(start + levels.len(), 0.0);
                    x[start + pos] = 1.0;
                }
                ColumnKind::Label => {
                    y = label_mapping
                        .binary_search_by(|l| l.as_str().cmp(raw))
                        .map_err(|_| {
                            Error::parse_at(row, format!("unseen label {raw:?}"))
                        })?;
                }
            }
        }
        samples.push(Sample::new(x, y));
    }

    Dataset::new(
        samples,
        feature_names,
        label_mapping.len(),
        provenance.to_string(),
        label_mapping,
    )
}

/// Requested split sizes and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub holdout_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

/// Seeded shuffle followed by a contiguous partition into
/// (train, holdout, test). Bitwise reproducible for a given seed.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let total = spec.train_count + spec.holdout_count + spec.test_count;
    if spec.train_count == 0 {
        return Err(Error::Config("split needs a nonempty training part".into()));
    }
    if total > dataset.len() {
        return Err(Error::Config(format!(
            "split sizes sum to {total} but dataset has {} samples",
            dataset.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let train = dataset.subset(&indices[..spec.train_count], "train");
    let holdout = dataset.subset(
        &indices[spec.train_count..spec.train_count + spec.holdout_count],
        "holdout",
    );
    let test = dataset.subset(
        &indices[spec.train_count + spec.holdout_count..total],
        "test",
    );
    Ok((train, holdout, test))
}

/// Per-feature affine transform fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    /// Population mean and std per feature; zero-variance features keep
    /// scale 1 so they are centered but not divided.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot fit a scaler on an empty dataset".into()));
        }
        let d = train.feature_dim();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for s in train.samples() {
            for (m, &v) in mean.iter_mut().zip(&s.x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for s in train.samples() {
            for ((v, &x), &m) in var.iter_mut().zip(&s.x).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|&v| {
                let std = (v / n).sqrt();
                if std > 0.0 {
                    std
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Scaler { mean, scale })
    }

    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.feature_dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} features, dataset has {}",
                self.mean.len(),
                dataset.feature_dim()
            )));
        }
        let samples = dataset
            .samples()
            .iter()
            .map(|s| {
                let x = s
                    .x
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((&v, &m), &sc)| (v - m) / sc)
                    .collect();
                Sample::new(x, s.y)
            })
            .collect();
        Dataset::new(
            samples,
            dataset.feature_names.clone(),
            dataset.class_count,
            format!("{}[standardized]", dataset.provenance),
            dataset.label_mapping.clone(),
        )
    }
}

/// Fits on train, applies to train and every other split.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let scaler = Scaler::fit(train)?;
    let train_t = scaler.transform(train)?;
    let others_t = others
        .iter()
        .map(|d| scaler.transform(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_t, others_t, scaler))
}

/// Two isotropic unit-variance Gaussian clusters centered at -(delta/2)e1
/// (class 0) and +(delta/2)e1 (class 1).
pub fn synthetic_gaussian(n_per_class: usize, dim: usize, delta: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "synthetic gaussian needs n_per_class >= 1 and dim >= 1, got ({n_per_class}, {dim})"
        )));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::Config(format!("class separation must be >= 0, got {delta}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for class in 0..2usize {
        let center = if class == 0 { -delta / 2.0 } else { delta / 2.0 };
        for _ in 0..n_per_class {
            let mut x = Vec::with_capacity(dim);
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                x.push(if j == 0 { center + z } else { z });
            }
            samples.push(Sample::new(x, class));
        }
    }
    let feature_names = (0..dim).map(|j| format!("f{j}")).collect();
    Dataset::new(
        samples,
        feature_names,
        2,
        format!("synthetic_gaussian(n_per_class={n_per_class},dim={dim},delta={delta},seed={seed})"),
        vec!["0".into(), "1".into()],
    )
}

/// Encoded dataset as delimited text: header of feature names plus a final
/// label column holding zero-padded class indices. Loading the result with
/// [`encoded_schema`] reproduces the samples exactly (f64 display round-trips).
pub fn encoded_csv_string(dataset: &Dataset) -> String {
    let width = (dataset.class_count - 1).to_string().len();
    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = dataset.feature_names.to_vec();
    header.push("label".into());
    wtr.write_record(&header).expect("write to memory");
    for s in dataset.samples() {
        let mut rec: Vec<String> = s.x.iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{:0width$}", s.y));
        wtr.write_record(&rec).expect("write to memory");
    }
    String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("utf8 csv")
}

/// Schema that reads [`encoded_csv_string`] output back.
pub fn encoded_schema(dataset: &Dataset) -> CsvSchema {
    let mut columns: Vec<ColumnSpec> = dataset
        .feature_names
        .iter()
        .map(|n| ColumnSpec {
            name: n.clone(),
            kind: ColumnKind::Numeric,
            levels: None,
        })
        .collect();
    columns.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::Label,
        levels: None,
    });
    CsvSchema {
        delimiter: ",".into(),
        has_header: true,
        columns,
    }
}

/// Seed and size of the committed credit corpus.
pub const CREDIT_ROWS: usize = 1000;
pub const CREDIT_SEED: u64 = 1785;

/// The canonical credit schema, compiled in so generated corpora can be
/// parsed without a schema file on disk.
pub fn credit_schema() -> CsvSchema {
    CsvSchema::from_toml_str(include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../schemas/german_credit.toml"
    )))
    .expect("embedded schema is valid")
}

const LABEL_FLIP_PROB: f64 = 0.2;
const GOOD_PRIOR: f64 = 5.0 / 6.0;

struct CatAttr {
    levels: &'static [&'static str],
    good: &'static [f64],
    bad: &'static [f64],
}

/// Categorical attribute tables, in column order. Weights are class-
/// conditional sampling probabilities; the good/bad contrast carries the
/// signal.
const CHECKING: CatAttr = CatAttr {
    levels: &["A11", "A12", "A13", "A14"],
    good: &[0.16, 0.22, 0.07, 0.55],
    bad: &[0.45, 0.35, 0.05, 0.15],
};
const HISTORY: CatAttr = CatAttr {
    levels: &["A30", "A31", "A32", "A33", "A34"],
    good: &[0.02, 0.03, 0.55, 0.08, 0.32],
    bad: &[0.08, 0.09, 0.47, 0.09, 0.27],
};
const PURPOSE: CatAttr = CatAttr {
    levels: &["A40", "A41", "A42", "A43", "A44", "A45", "A46", "A48", "A49", "A410"],
    good: &[0.22, 0.11, 0.19, 0.30, 0.01, 0.02, 0.05, 0.01, 0.08, 0.01],
    bad: &[0.28, 0.06, 0.17, 0.25, 0.02, 0.03, 0.07, 0.01, 0.09, 0.02],
};
const SAVINGS: CatAttr = CatAttr {
    levels: &["A61", "A62", "A63", "A64", "A65"],
    good: &[0.48, 0.10, 0.07, 0.06, 0.29],
    bad: &[0.72, 0.11, 0.04, 0.02, 0.11],
};
const EMPLOYMENT: CatAttr = CatAttr {
    levels: &["A71", "A72", "A73", "A74", "A75"],
    good: &[0.04, 0.14, 0.33, 0.19, 0.30],
    bad: &[0.10, 0.23, 0.33, 0.16, 0.18],
};
const PERSONAL: CatAttr = CatAttr {
    levels: &["A91", "A92", "A93", "A94"],
    good: &[0.04, 0.29, 0.57, 0.10],
    bad: &[0.06, 0.36, 0.48, 0.10],
};
const DEBTORS: CatAttr = CatAttr {
    levels: &["A101", "A102", "A103"],
    good: &[0.90, 0.04, 0.06],
    bad: &[0.92, 0.05, 0.03],
};
const PROPERTY: CatAttr = CatAttr {
    levels: &["A121", "A122", "A123", "A124"],
    good: &[0.32, 0.24, 0.24, 0.20],
    bad: &[0.17, 0.22, 0.23, 0.38],
};
const PLANS: CatAttr = CatAttr {
    levels: &["A141", "A142", "A143"],
    good: &[0.11, 0.04, 0.85],
    bad: &[0.22, 0.06, 0.72],
};
const HOUSING: CatAttr = CatAttr {
    levels: &["A151", "A152", "A153"],
    good: &[0.15, 0.75, 0.10],
    bad: &[0.25, 0.60, 0.15],
};
const JOB: CatAttr = CatAttr {
    levels: &["A171", "A172", "A173", "A174"],
    good: &[0.02, 0.20, 0.64, 0.14],
    bad: &[0.03, 0.19, 0.61, 0.17],
};
const PHONE: CatAttr = CatAttr {
    levels: &["A191", "A192"],
    good: &[0.58, 0.42],
    bad: &[0.65, 0.35],
};
const FOREIGN: CatAttr = CatAttr {
    levels: &["A201", "A202"],
    good: &[0.96, 0.04],
    bad: &[0.99, 0.01],
};

fn pick_weighted(rng: &mut ChaCha12Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn cat(rng: &mut ChaCha12Rng, attr: &CatAttr, good: bool) -> &'static str {
    attr.levels[pick_weighted(rng, if good { attr.good } else { attr.bad })]
}

fn lognorm_int(rng: &mut ChaCha12Rng, mu: f64, sigma: f64, lo: i64, hi: i64) -> i64 {
    let z: f64 = rng.sample(StandardNormal);
    ((mu + sigma * z).exp().round() as i64).clamp(lo, hi)
}

fn norm_int(rng: &mut ChaCha12Rng, mean: f64, sd: f64, lo: i64, hi: i64) -> i64 {
    let z: f64 = rng.sample(StandardNormal);
    ((mean + sd * z).round() as i64).clamp(lo, hi)
}

/// Synthetic credit-application corpus in the classic 20-attribute format:
/// space-delimited, no header, 13 coded categoricals and 7 integers, final
/// label 1 (good) or 2 (bad), roughly 70% good. Class-conditional attribute
/// distributions carry the signal; a 20% label flip caps attainable test
/// accuracy near 0.8 so that memorizing models show a train-test gap.
pub fn generate_credit_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..rows {
        let good = rng.random::<f64>() < GOOD_PRIOR;
        let flip = rng.random::<f64>() < LABEL_FLIP_PROB;
        let label = if good != flip { "1" } else { "2" };

        let checking = cat(&mut rng, &CHECKING, good);
        let duration = if good {
            lognorm_int(&mut rng, 2.85, 0.50, 4, 60)
        } else {
            lognorm_int(&mut rng, 3.25, 0.50, 4, 72)
        };
        let history = cat(&mut rng, &HISTORY, good);
        let purpose = cat(&mut rng, &PURPOSE, good);
        let amount = if good {
            lognorm_int(&mut rng, 7.70, 0.85, 250, 15000)
        } else {
            lognorm_int(&mut rng, 8.15, 0.95, 250, 18424)
        };
        let savings = cat(&mut rng, &SAVINGS, good);
        let employment = cat(&mut rng, &EMPLOYMENT, good);
        let installment = 1 + pick_weighted(
            &mut rng,
            if good {
                &[0.13, 0.22, 0.16, 0.49]
            } else {
                &[0.11, 0.20, 0.14, 0.55]
            },
        );
        let personal = cat(&mut rng, &PERSONAL, good);
        let debtors = cat(&mut rng, &DEBTORS, good);
        let residence = 1 + pick_weighted(&mut rng, &[0.13, 0.31, 0.15, 0.41]);
        let property = cat(&mut rng, &PROPERTY, good);
        let age = if good {
            norm_int(&mut rng, 37.0, 11.5, 19, 75)
        } else {
            norm_int(&mut rng, 33.0, 10.5, 19, 75)
        };
        let plans = cat(&mut rng, &PLANS, good);
        let housing = cat(&mut rng, &HOUSING, good);
        let credits = 1 + pick_weighted(
            &mut rng,
            if good {
                &[0.62, 0.32, 0.05, 0.01]
            } else {
                &[0.68, 0.27, 0.04, 0.01]
            },
        );
        let job = cat(&mut rng, &JOB, good);
        let liable = 1 + pick_weighted(&mut rng, &[0.85, 0.15]);
        let phone = cat(&mut rng, &PHONE, good);
        let foreign = cat(&mut rng, &FOREIGN, good);

        out.push_str(&format!(
            "{checking} {duration} {history} {purpose} {amount} {savings} {employment} \
             {installment} {personal} {debtors} {residence} {property} {age} {plans} \
             {housing} {credits} {job} {liable} {phone} {foreign} {label}\n"
        ));
    }
    out
}
