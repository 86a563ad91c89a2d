use std::collections::BTreeMap;
use std::path::Path;

use infochoice::data::RawTable;
use infochoice::generator::{encode_partial, impute_draws, ImputeTargets};
use infochoice::rng::{stream_rng, tags};
use rayon::prelude::*;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::Sink;

pub struct ImputeArgs<'a> {
    pub checkpoint: Option<&'a Path>,
    pub input: Option<&'a Path>,
    /// Overrides the configured target list when non-empty.
    pub targets: Vec<String>,
}

/// Fills the target variables of every input record with draws from the
/// model conditioned on the remaining variables.
pub fn impute(ctx: &Context, args: &ImputeArgs) -> CliResult<()> {
    let section = &ctx.cfg.config.impute;
    let input = match args.input {
        Some(p) => p.to_path_buf(),
        None => section
            .input
            .as_deref()
            .map(|p| ctx.cfg.resolve(p))
            .ok_or_else(|| CliError::Usage("no input file: pass --input or set [impute] input".into()))?,
    };
    let targets: Vec<String> = if args.targets.is_empty() { section.targets.clone() } else { args.targets.clone() };
    if targets.is_empty() {
        return Err(CliError::Usage("no target variables: pass --targets or set [impute] targets".into()));
    }
    let target_refs: Vec<&str> = targets.iter().map(String::as_str).collect();

    let (train, _) = ctx.datasets()?;
    let params = ctx.checkpoint(args.checkpoint, &train)?;
    let schema = train.schema();
    let resolved = ImputeTargets::new(schema, &target_refs)?;
    let raw = RawTable::from_csv_path(&input, ctx.cfg.config.data.id_column.as_deref())?;

    let drawn: Vec<Vec<(Vec<f64>, usize)>> = (0..raw.len())
        .into_par_iter()
        .map(|r| {
            let record: BTreeMap<String, String> = raw
                .headers()
                .iter()
                .enumerate()
                .filter(|(c, _)| !raw.get(r, *c).trim().is_empty())
                .map(|(c, h)| (h.clone(), raw.get(r, c).to_string()))
                .collect();
            let (x, y) = encode_partial(schema, &record, &target_refs, &raw.ids()[r])?;
            let mut rng = stream_rng(section.seed, &[tags::IMPUTE, r as u64]);
            impute_draws(&x, y.unwrap_or(0), &resolved, &params, schema, section.steps, section.draws, &mut rng)
        })
        .collect::<infochoice::Result<_>>()?;

    let mut headers = vec!["id".to_string(), "draw".to_string()];
    headers.extend(schema.decoded_headers());
    let mut rows = Vec::with_capacity(raw.len() * section.draws);
    for (r, draws) in drawn.iter().enumerate() {
        for (d, (x, y)) in draws.iter().enumerate() {
            let mut row = vec![raw.ids()[r].clone(), d.to_string()];
            row.extend(schema.decode_row(x, *y).into_iter().map(|(_, v)| v.to_string()));
            rows.push(row);
        }
    }
    let table = RawTable::new(headers, rows, None)?;

    let sink = Sink::new(
        ctx.out(),
        ctx.sink(&schema.hash(), section.seed)?
            .provenance
            .with("targets", targets.join(";"))
            .with("steps", section.steps)
            .with("draws", section.draws),
    )?;
    let path = sink.table("imputed.csv", |buf| table.write_csv(buf))?;
    println!("imputed {} for {} records ({} draws each) into {}", targets.join(", "), raw.len(), section.draws, path.display());
    Ok(())
}
