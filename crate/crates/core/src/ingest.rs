//! Delimited-text ingestion with per-column kind inference, and seeded
//! dataset synthesis for scaling runs.

use std::collections::HashSet;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Column, ColumnKind, Dataset, DatasetId, ModelError};
use crate::scalar::Scalar;

/// Upper bound on synthesized cells (rows x dims).
pub const MAX_SYNTH_CELLS: usize = 400_000_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` has more than {limit} distinct non-numeric values")]
    TooManyCategories { column: String, limit: usize },
    #[error("input exceeds the {0}-byte limit")]
    SizeLimit(u64),
    #[error("invalid ingest options: {0}")]
    InvalidOptions(&'static str),
    #[error("malformed delimited text: {0}")]
    Malformed(String),
    #[error("{cells} cells exceed the synthesis limit of {limit}")]
    AllocationLimit { cells: u128, limit: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IngestError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EmptyFile => "EmptyFile",
            Self::RaggedRow { .. } => "RaggedRow",
            Self::TooManyCategories { .. } => "TooManyCategories",
            Self::SizeLimit(_) => "SizeLimit",
            Self::InvalidOptions(_) => "InvalidOptions",
            Self::Malformed(_) => "Malformed",
            Self::AllocationLimit { .. } => "AllocationLimit",
            Self::Io(_) => "Io",
            Self::Model(e) => e.name(),
        }
    }
}

/// What to do with a non-numeric column whose cardinality exceeds
/// `max_categories`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CardinalityPolicy {
    /// Fail the whole parse with `TooManyCategories`.
    Reject,
    /// Keep the column as [`ColumnKind::Text`], which cannot become an axis.
    #[default]
    Exclude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub delimiter: char,
    pub has_header: bool,
    pub missing_tokens: Vec<String>,
    pub max_categories: usize,
    pub cardinality: CardinalityPolicy,
    /// Reader-based parsing stops with `SizeLimit` past this many bytes.
    pub max_bytes: Option<u64>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            missing_tokens: ["", "NA", "NaN", "null"].map(String::from).to_vec(),
            max_categories: 64,
            cardinality: CardinalityPolicy::default(),
            max_bytes: None,
        }
    }
}

impl IngestOptions {
    fn validate(&self) -> Result<u8, IngestError> {
        if self.delimiter == '"' {
            return Err(IngestError::InvalidOptions("delimiter cannot be a quote"));
        }
        if !self.delimiter.is_ascii() {
            return Err(IngestError::InvalidOptions(
                "delimiter must be a single byte",
            ));
        }
        if self.max_categories < 1 {
            return Err(IngestError::InvalidOptions(
                "max_categories must be at least 1",
            ));
        }
        Ok(self.delimiter as u8)
    }

    pub fn is_missing(&self, field: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == field)
    }
}

/// Numeric iff every non-missing value parses as a finite decimal;
/// otherwise categorical, subject to `max_categories`.
pub fn infer_kind<T: Scalar, S: AsRef<str>>(
    values: &[S],
    opts: &IngestOptions,
) -> Result<ColumnKind, IngestError> {
    infer_named::<T, S>("", values, opts)
}

fn infer_named<T: Scalar, S: AsRef<str>>(
    column: &str,
    values: &[S],
    opts: &IngestOptions,
) -> Result<ColumnKind, IngestError> {
    let present = || {
        values
            .iter()
            .map(AsRef::as_ref)
            .filter(|v| !opts.is_missing(v))
    };
    if present().all(|v| T::parse_finite(v).is_some()) {
        return Ok(ColumnKind::Numeric);
    }
    let mut distinct: HashSet<&str> = HashSet::new();
    for v in present() {
        if distinct.insert(v) && distinct.len() > opts.max_categories {
            return Err(IngestError::TooManyCategories {
                column: column.to_owned(),
                limit: opts.max_categories,
            });
        }
    }
    Ok(ColumnKind::Categorical)
}

/// Content-derived dataset id: identical bytes yield identical ids.
pub fn content_id(bytes: &[u8]) -> DatasetId {
    let digest = Sha256::digest(bytes);
    DatasetId::new(hex::encode(&digest[..8]))
}

/// Parses delimited text into a dataset.
pub fn parse_table<T: Scalar>(
    bytes: &[u8],
    opts: &IngestOptions,
) -> Result<Dataset<T>, IngestError> {
    let delimiter = opts.validate()?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut records = reader.records();
    let mut fields: Vec<Vec<String>> = Vec::new();
    let names: Vec<String>;
    let width: usize;
    let first = match records.next() {
        Some(r) => r.map_err(|e| IngestError::Malformed(e.to_string()))?,
        None => return Err(IngestError::EmptyFile),
    };
    if opts.has_header {
        names = first.iter().map(str::to_owned).collect();
        width = names.len();
        fields.resize_with(width, Vec::new);
    } else {
        width = first.len();
        names = (0..width).map(|i| format!("c{i}")).collect();
        fields.resize_with(width, Vec::new);
        for (c, f) in first.iter().enumerate() {
            fields[c].push(f.to_owned());
        }
    }
    for record in records {
        let record = record.map_err(|e| IngestError::Malformed(e.to_string()))?;
        if record.len() != width {
            // a lone empty field is a blank line
            if record.len() == 1 && record.get(0) == Some("") {
                continue;
            }
            return Err(IngestError::RaggedRow {
                line: record.position().map_or(0, |p| p.line()),
                expected: width,
                found: record.len(),
            });
        }
        for (c, f) in record.iter().enumerate() {
            fields[c].push(f.to_owned());
        }
    }

    let mut columns = Vec::with_capacity(width);
    for (name, raw) in names.into_iter().zip(fields) {
        let kind = match infer_named::<T, _>(&name, &raw, opts) {
            Ok(kind) => kind,
            Err(IngestError::TooManyCategories { .. })
                if opts.cardinality == CardinalityPolicy::Exclude =>
            {
                ColumnKind::Text
            }
            Err(e) => return Err(e),
        };
        let column = match kind {
            ColumnKind::Numeric => Column::numeric(
                name,
                raw.iter()
                    .map(|f| {
                        if opts.is_missing(f) {
                            None
                        } else {
                            T::parse_finite(f)
                        }
                    })
                    .collect(),
            ),
            ColumnKind::Categorical => {
                let values: Vec<Option<&str>> = raw
                    .iter()
                    .map(|f| (!opts.is_missing(f)).then_some(f.as_str()))
                    .collect();
                Column::categorical(name, &values)
            }
            ColumnKind::Text => Column::text(
                name,
                raw.into_iter()
                    .map(|f| (!opts.is_missing(&f)).then_some(f))
                    .collect(),
            ),
        };
        columns.push(column);
    }
    Ok(Dataset::new(content_id(bytes), "table", columns)?)
}

/// Reads at most `opts.max_bytes` and parses the result.
pub fn parse_reader<T: Scalar, R: Read>(
    reader: R,
    opts: &IngestOptions,
) -> Result<Dataset<T>, IngestError> {
    let mut buf = Vec::new();
    match opts.max_bytes {
        Some(limit) => {
            reader.take(limit + 1).read_to_end(&mut buf)?;
            if buf.len() as u64 > limit {
                return Err(IngestError::SizeLimit(limit));
            }
        }
        None => {
            let mut reader = reader;
            reader.read_to_end(&mut buf)?;
        }
    }
    parse_table(&buf, opts)
}

/// Size and seed of a synthesized dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub dims: usize,
    pub rows: usize,
    pub seed: u64,
}

/// Fraction of each column's range used as uniform jitter.
pub const SYNTH_JITTER: f64 = 0.01;

/// Seeded synthetic dataset.
///
/// With a base dataset, rows of its numeric columns are resampled with
/// replacement and each value gets uniform jitter of up to 1% of the
/// column range; output column `j` copies base numeric column
/// `j mod m`. Without a base (or with no usable numeric column), values
/// are uniform on `[0, 1)`.
pub fn synthesize<T: Scalar>(
    spec: SynthSpec,
    base: Option<&Dataset<T>>,
) -> Result<Dataset<T>, IngestError> {
    let cells = spec.rows as u128 * spec.dims as u128;
    if cells > MAX_SYNTH_CELLS as u128 {
        return Err(IngestError::AllocationLimit {
            cells,
            limit: MAX_SYNTH_CELLS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sources: Vec<&Column<T>> = base
        .map(|b| {
            b.columns()
                .iter()
                .filter(|c| c.kind() == ColumnKind::Numeric && c.numeric_stats().is_some())
                .collect()
        })
        .unwrap_or_default();

    let columns: Vec<Column<T>> = if sources.is_empty() || base.is_some_and(|b| b.row_count() == 0)
    {
        let mut cols: Vec<Vec<T>> = (0..spec.dims)
            .map(|_| Vec::with_capacity(spec.rows))
            .collect();
        for _ in 0..spec.rows {
            for col in cols.iter_mut() {
                col.push(T::lit(rng.random::<f64>()));
            }
        }
        cols.into_iter()
            .enumerate()
            .map(|(j, v)| Column::numeric_dense(format!("x{j}"), v))
            .collect()
    } else {
        let base_rows = base.map_or(0, Dataset::row_count);
        let picks: Vec<usize> = (0..spec.rows)
            .map(|_| rng.random_range(0..base_rows))
            .collect();
        let m = sources.len();
        let mut out = Vec::with_capacity(spec.dims);
        for j in 0..spec.dims {
            let src = sources[j % m];
            let range = src
                .numeric_stats()
                .map_or(0.0, |s| s.range().to_f64_lossy());
            let amp = range * SYNTH_JITTER;
            let values: Vec<Option<T>> = picks
                .iter()
                .map(|&r| {
                    let jitter = rng.random_range(-1.0..=1.0) * amp;
                    src.numeric_value(r)
                        .map(|v| T::lit(v.to_f64_lossy() + jitter))
                })
                .collect();
            let name = if j < m {
                src.name().to_owned()
            } else {
                format!("{}_{}", src.name(), j / m)
            };
            out.push(Column::numeric(name, values));
        }
        out
    };

    let id = DatasetId::new(format!(
        "synth-d{}-n{}-s{}{}",
        spec.dims,
        spec.rows,
        spec.seed,
        base.map(|b| format!("-{}", b.id())).unwrap_or_default()
    ));
    Ok(Dataset::new(id.clone(), id.as_str(), columns)?)
}
