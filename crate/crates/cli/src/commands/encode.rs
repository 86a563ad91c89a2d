use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use infochoice::data::{
    encode as encode_table, fit_schema, stratified_split_indices, Dataset, EncodingSchema, RawTable, Role, VariableKind,
};

use super::{Context, TRAIN_FILE, VALID_FILE};
use crate::error::{CliError, CliResult};

/// Choice label per raw row, numbered by sorted level (or by the configured
/// level order), for stratification.
fn choice_labels(ctx: &Context, raw: &RawTable) -> CliResult<(Vec<usize>, usize)> {
    let spec = ctx
        .cfg
        .config
        .variables
        .iter()
        .find(|v| v.role == Role::Choice)
        .ok_or_else(|| CliError::Usage("no variable has role = \"choice\"".into()))?;
    let col = raw.column(&spec.name).ok_or_else(|| infochoice::Error::MissingColumn(spec.name.clone()))?;
    let mut levels: Vec<String> = match &spec.kind {
        VariableKind::Categorical { levels } if !levels.is_empty() => levels.clone(),
        _ => Vec::new(),
    };
    if levels.is_empty() {
        let mut seen: Vec<String> = (0..raw.len()).map(|r| raw.get(r, col).trim().to_string()).collect();
        seen.sort();
        seen.dedup();
        levels = seen;
    }
    let index: BTreeMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let labels = (0..raw.len())
        .map(|r| {
            let v = raw.get(r, col).trim();
            index.get(v).copied().ok_or_else(|| {
                CliError::Core(infochoice::Error::UnseenLevel {
                    row: raw.ids()[r].clone(),
                    variable: spec.name.clone(),
                    levels: vec![v.to_string()],
                })
            })
        })
        .collect::<CliResult<Vec<usize>>>()?;
    Ok((labels, levels.len()))
}

fn schema_report(schema: &EncodingSchema, train: &Dataset, valid: &Dataset) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "encoded width: {}", schema.encoded_width());
    let _ = writeln!(s, "records: {} train, {} validation", train.len(), valid.len());
    let _ = writeln!(s, "\nvariables:");
    for b in schema.blocks() {
        let _ = write!(s, "  {:<20} {:?}, columns {}..{}", b.name, b.kind, b.offset, b.offset + b.width);
        if let Some(st) = schema.continuous_stats().get(&b.name) {
            let _ = write!(s, ", log mean {:.6}, log std {:.6}", st.mean, st.std);
        }
        if let Some(n) = schema.floored_counts().get(&b.name) {
            let _ = write!(s, ", {n} values floored");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "\ncolumns: {}", schema.column_labels().join(", "));
    let _ = writeln!(s, "\nchoice `{}` shares (train / validation):", schema.choice_name());
    let (ts, vs) = (train.class_shares(), valid.class_shares());
    for (j, alt) in schema.alternatives().iter().enumerate() {
        let _ = writeln!(s, "  {alt:<20} {:.4} / {:.4}", ts[j], vs[j]);
    }
    let _ = writeln!(s, "\ntrain checksum: {}\nvalidation checksum: {}", train.checksum(), valid.checksum());
    s
}

/// Splits the raw records, fits the schema on the training rows and writes
/// both encoded partitions plus a readable schema report.
pub fn encode(ctx: &Context) -> CliResult<()> {
    let data = &ctx.cfg.config.data;
    let raw = RawTable::from_csv_path(ctx.cfg.raw_path(), data.id_column.as_deref())?;
    let (labels, classes) = choice_labels(ctx, &raw)?;
    let (ti, vi) = stratified_split_indices(&labels, classes, data.train_fraction, data.seed)?;
    let train_raw = raw.subset(&ti);
    let schema = Arc::new(fit_schema(&train_raw, &ctx.cfg.config.variables)?);
    let train = encode_table(&train_raw, &schema)?;
    let valid = encode_table(&raw.subset(&vi), &schema)?;

    let sink = ctx.sink(&schema.hash(), data.seed)?;
    train.save(sink.path(TRAIN_FILE))?;
    valid.save(sink.path(VALID_FILE))?;
    let report = schema_report(&schema, &train, &valid);
    let path = sink.text("schema_report.txt", &report)?;
    println!(
        "encoded {} records ({} train, {} validation) into {} columns; schema {}",
        raw.len(),
        train.len(),
        valid.len(),
        schema.encoded_width(),
        schema.hash()
    );
    println!("wrote {}, {}, {}", sink.path(TRAIN_FILE).display(), sink.path(VALID_FILE).display(), path.display());
    Ok(())
}
