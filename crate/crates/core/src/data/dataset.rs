use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};

use super::raw::RawTable;
use super::schema::{BlockKind, EncodingSchema};

pub const DATASET_FORMAT: &str = "infochoice-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Encoded design matrix `x` (N x M) with the chosen alternative per row.
///
/// The one-hot choice matrix is available through [`Dataset::y`]; rows are
/// stored by alternative index so the one-hot property holds by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    choices: Vec<usize>,
    schema: Arc<EncodingSchema>,
    ids: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, choices: Vec<usize>, schema: Arc<EncodingSchema>, ids: Vec<String>) -> Result<Self> {
        if x.ncols() != schema.encoded_width() {
            return Err(Error::Dimension(format!(
                "design matrix has {} columns, schema expects {}",
                x.ncols(),
                schema.encoded_width()
            )));
        }
        if x.nrows() != choices.len() || ids.len() != choices.len() {
            return Err(Error::Dimension(format!(
                "row counts disagree: x {}, choices {}, ids {}",
                x.nrows(),
                choices.len(),
                ids.len()
            )));
        }
        let j = schema.n_alternatives();
        if let Some(bad) = choices.iter().position(|&c| c >= j) {
            return Err(Error::Dimension(format!("row {bad}: alternative {} out of range 0..{j}", choices[bad])));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("design matrix contains non-finite values".into()));
        }
        for block in schema.blocks().iter().filter(|b| b.kind == BlockKind::Cyclical) {
            for (r, row) in x.outer_iter().enumerate() {
                let norm = row[block.offset].powi(2) + row[block.offset + 1].powi(2);
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::Format(format!("row {r}: cyclical `{}` is off the unit circle", block.name)));
                }
            }
        }
        Ok(Self { x, choices, schema, ids })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn schema(&self) -> &EncodingSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<EncodingSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// One-hot N x J choice matrix.
    pub fn y(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.len(), self.schema.n_alternatives()));
        for (i, &c) in self.choices.iter().enumerate() {
            y[[i, c]] = 1.0;
        }
        y
    }

    /// Empirical share of each alternative.
    pub fn class_shares(&self) -> Vec<f64> {
        let mut shares = vec![0.0; self.schema.n_alternatives()];
        for &c in &self.choices {
            shares[c] += 1.0;
        }
        let n = self.len().max(1) as f64;
        shares.iter_mut().for_each(|s| *s /= n);
        shares
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            choices: indices.iter().map(|&i| self.choices[i]).collect(),
            schema: Arc::clone(&self.schema),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Back to raw-space records (continuous values exponentiated, levels and
    /// angles restored).
    pub fn decode(&self) -> RawTable {
        let rows = (0..self.len())
            .map(|i| {
                let x = self.x.row(i);
                let x = x.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
                self.schema.decode_row(&x, self.choices[i]).into_iter().map(|(_, v)| v.to_string()).collect()
            })
            .collect();
        RawTable::new(self.schema.decoded_headers(), rows, None).expect("decoded rows match headers")
    }

    /// Order-sensitive SHA-256 over ids, choices and the bit patterns of `x`.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.schema.hash().as_bytes());
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        for &c in &self.choices {
            h.update((c as u64).to_le_bytes());
        }
        for v in self.x.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_file(&self) -> DatasetFile {
        DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            schema_hash: self.schema.hash(),
            schema: (*self.schema).clone(),
            n_records: self.len(),
            width: self.x.ncols(),
            ids: self.ids.clone(),
            choices: self.choices.clone(),
            x: self.x.iter().copied().collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = serde_json::to_vec(&self.to_file())?;
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let file: DatasetFile = serde_json::from_slice(&bytes)?;
        file.into_dataset()
    }
}

/// On-disk dataset container (JSON). `x` is row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub schema: EncodingSchema,
    pub n_records: usize,
    pub width: usize,
    pub ids: Vec<String>,
    pub choices: Vec<usize>,
    pub x: Vec<f64>,
}

impl DatasetFile {
    pub fn into_dataset(self) -> Result<Dataset> {
        if self.format != DATASET_FORMAT {
            return Err(Error::Format(format!("expected format `{DATASET_FORMAT}`, found `{}`", self.format)));
        }
        if self.version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {}", self.version)));
        }
        if self.schema.hash() != self.schema_hash {
            return Err(Error::Format("embedded schema does not match its hash".into()));
        }
        let x = Array2::from_shape_vec((self.n_records, self.width), self.x)
            .map_err(|e| Error::Format(format!("design matrix shape: {e}")))?;
        Dataset::new(x, self.choices, Arc::new(self.schema), self.ids)
    }
}

/// Encodes every record of `raw` with a previously fitted schema.
pub fn encode(raw: &RawTable, schema: &Arc<EncodingSchema>) -> Result<Dataset> {
    let m = schema.encoded_width();
    let cols: Vec<(String, usize)> = schema
        .variables()
        .iter()
        .map(|v| raw.column(&v.name).map(|c| (v.name.clone(), c)).ok_or_else(|| Error::MissingColumn(v.name.clone())))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((raw.len(), m));
    let mut choices = Vec::with_capacity(raw.len());
    for r in 0..raw.len() {
        let lookup = |name: &str| cols.iter().find(|(n, _)| n == name).map(|(_, c)| raw.get(r, *c));
        let mut row = vec![0.0; m];
        let choice = schema.encode_with(lookup, &raw.ids()[r], &[], &mut row)?;
        x.row_mut(r).assign(&ArrayView1::from(&row));
        choices.push(choice.expect("choice encoded when not skipped"));
    }
    Dataset::new(x, choices, Arc::clone(schema), raw.ids().to_vec())
}

/// Stratified, seeded train/validation partition of record indices.
///
/// The training size is `round(n * train_fraction)` (kept within `1..n`);
/// per-class quotas are apportioned by largest remainder so class shares
/// match the full data as closely as integer counts allow.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} record(s); need at least 2")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train_fraction {train_fraction} must lie in (0, 1)")));
    }
    let total = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = stream_rng(seed, &[tags::SPLIT]);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let exact: Vec<f64> = by_class.iter().map(|m| m.len() as f64 * total as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = total - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::with_capacity(total);
    let mut valid = Vec::with_capacity(n - total);
    for (members, q) in by_class.iter().zip(&quota) {
        train.extend_from_slice(&members[..*q]);
        valid.extend_from_slice(&members[*q..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

/// Seeded stratified split of an encoded dataset.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, valid) =
        stratified_split_indices(dataset.choices(), dataset.schema().n_alternatives(), train_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&valid)))
}
