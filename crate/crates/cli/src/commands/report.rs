use std::io::Write;
use std::path::PathBuf;

use infochoice::choice::{predict, write_breakdown_csv, write_probabilities_csv};
use infochoice::data::Dataset;
use infochoice::diagnostics::{activation_stats, beta_sensitivity, write_activation_csv, ActivationStat, MaxentReport};
use infochoice::energy::ModelParams;
use infochoice::generator::{distribution_report, generate_chains, DistributionReport, GenerateOptions};
use infochoice::trainer::TrainConfig;

use super::Context;
use crate::error::CliResult;
use crate::output::Sink;

pub struct ReportOptions {
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Latent sizes for an additional sensitivity table.
    pub sensitivity: Option<Vec<usize>>,
    /// Also generate synthetic data and score it against the training data.
    pub fit: bool,
}

fn csv_err(e: std::io::Error) -> infochoice::Error {
    infochoice::Error::Csv(e.into())
}

fn write_mode_share(out: &mut Vec<u8>, data: &Dataset, predicted: &[f64]) -> infochoice::Result<()> {
    let observed = data.class_shares();
    writeln!(out, "alternative,observed_share,predicted_share").map_err(csv_err)?;
    for (j, alt) in data.schema().alternatives().iter().enumerate() {
        writeln!(out, "{alt},{},{}", observed[j], predicted[j]).map_err(csv_err)?;
    }
    Ok(())
}

/// Every reported number as one `table,key,alternative,size,value` row.
fn write_long(
    out: &mut Vec<u8>,
    data: &Dataset,
    predicted: &[f64],
    maxent: &MaxentReport,
    activation: &[ActivationStat],
) -> infochoice::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["table", "key", "alternative", "size", "value"])?;
    let observed = data.class_shares();
    for (j, alt) in data.schema().alternatives().iter().enumerate() {
        w.write_record(["mode_share", "observed", alt, "", &observed[j].to_string()])?;
        w.write_record(["mode_share", "predicted", alt, "", &predicted[j].to_string()])?;
    }
    for (label, row) in maxent.labels.iter().zip(&maxent.values) {
        for (size, v) in maxent.sizes.iter().zip(row) {
            w.write_record(["maxent", label, "", &size.to_string(), &v.to_string()])?;
        }
    }
    for s in activation {
        let rate = s.activation_rate.map(|r| r.to_string()).unwrap_or_default();
        w.write_record(["activation", "w_prime_mean", &s.alternative, "", &s.w_prime_mean.to_string()])?;
        w.write_record(["activation", "w_prime_std", &s.alternative, "", &s.w_prime_std.to_string()])?;
        w.write_record(["activation", "activation_rate", &s.alternative, "", &rate])?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

fn write_fit_summary(out: &mut Vec<u8>, reports: &[DistributionReport]) -> infochoice::Result<()> {
    writeln!(out, "variable,r2,adjusted_r2").map_err(csv_err)?;
    for r in reports {
        let adj = r.adjusted_r2.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{adj}", r.variable, r.r2).map_err(csv_err)?;
    }
    Ok(())
}

/// Generates synthetic records and writes one histogram comparison per
/// variable plus a summary of the fit scores.
pub(super) fn fit_reports(ctx: &Context, sink: &Sink, params: &ModelParams, train: &Dataset) -> CliResult<Dataset> {
    let g = &ctx.cfg.config.generate;
    let opts = GenerateOptions { count: g.count, burn_in: g.burn_in, thin: g.thin, chains: g.chains, seed: g.seed };
    let synthetic = generate_chains(params, train.schema_arc(), &opts, Some(train))?;
    let schema = train.schema();
    let mut names: Vec<String> = schema.blocks().iter().map(|b| b.name.clone()).collect();
    names.push(schema.choice_name().to_string());
    let mut reports = Vec::new();
    for name in &names {
        let r = distribution_report(train, &synthetic, name, g.bins)?;
        sink.table(&format!("fit_{name}.csv"), |buf| r.write_csv(buf))?;
        reports.push(r);
    }
    sink.table("fit_summary.csv", |buf| write_fit_summary(buf, &reports))?;
    for r in &reports {
        let adj = r.adjusted_r2.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        println!("fit {:<20} R2 {:.4}  adjusted R2 {adj}", r.variable, r.r2);
    }
    Ok(synthetic)
}

/// Mode shares, maxent, activation statistics and probabilities for one
/// checkpoint on one dataset.
pub fn report(ctx: &Context, opts: &ReportOptions) -> CliResult<()> {
    let data = ctx.dataset(opts.dataset.as_deref())?;
    let params = ctx.checkpoint(opts.checkpoint.as_deref(), &data)?;
    let threshold = ctx.cfg.config.report.activation_threshold;
    let sink = Sink::new(
        ctx.out(),
        ctx.sink(&data.schema().hash(), ctx.cfg.config.train.seed)?
            .provenance
            .with("latent_count", params.n_latent())
            .with("records", data.len())
            .with("activation_threshold", threshold),
    )?;

    let prediction = predict(&data, &params);
    let maxent = MaxentReport::from_params(data.schema(), &params, &data.class_shares())?;
    let activation = activation_stats(&params, &data, threshold)?;
    sink.table("mode_share.csv", |buf| write_mode_share(buf, &data, &prediction.mode_share))?;
    sink.table("probabilities.csv", |buf| write_probabilities_csv(buf, &data, &prediction))?;
    sink.table("utilities.csv", |buf| write_breakdown_csv(buf, &data, &params))?;
    sink.table("maxent.csv", |buf| maxent.write_csv(buf))?;
    sink.table("activation.csv", |buf| write_activation_csv(buf, &activation))?;
    sink.table("report_long.csv", |buf| write_long(buf, &data, &prediction.mode_share, &maxent, &activation))?;

    println!("mode shares ({} records):", data.len());
    let observed = data.class_shares();
    for (j, alt) in data.schema().alternatives().iter().enumerate() {
        println!("  {alt:<20} observed {:.4}  predicted {:.4}", observed[j], prediction.mode_share[j]);
    }
    if opts.fit {
        let (train, _) = ctx.datasets()?;
        fit_reports(ctx, &sink, &params, &train)?;
    }
    if let Some(sizes) = &opts.sensitivity {
        sensitivity(ctx, sizes)?;
    }
    println!("reports written to {}", sink.dir.display());
    Ok(())
}

/// Trains one model per latent size and writes the maxent table (one column
/// per size with mean and standard deviation footers) and the coefficients.
pub fn sensitivity(ctx: &Context, sizes: &[usize]) -> CliResult<()> {
    let (train, valid) = ctx.datasets()?;
    let base: TrainConfig = ctx.cfg.config.train.clone();
    let sizes_label: Vec<String> = sizes.iter().map(usize::to_string).collect();
    let sink = Sink::new(
        ctx.out(),
        ctx.sink(&train.schema().hash(), base.seed)?.provenance.with_training(&base).with("sizes", sizes_label.join(";")),
    )?;
    let table = beta_sensitivity(&train, &valid, sizes, &base)?;
    sink.table("sensitivity_maxent.csv", |buf| table.maxent.write_csv(buf))?;
    sink.table("sensitivity_beta.csv", |buf| table.write_beta_csv(buf, train.schema()))?;
    sink.table("sensitivity_runs.csv", |buf| {
        writeln!(buf, "S,best_epoch,epochs_run,valid_nll").map_err(csv_err)?;
        for r in &table.runs {
            let best = r.history.best_epoch.map(|e| e.to_string()).unwrap_or_default();
            writeln!(buf, "{},{best},{},{}", r.latent_count, r.history.epochs.len(), r.valid_nll).map_err(csv_err)?;
        }
        Ok(())
    })?;
    for (k, s) in table.maxent.sizes.iter().enumerate() {
        println!("S={s:<4} maxent mean {:.4}  std {:.4}", table.maxent.mean[k], table.maxent.std[k]);
    }
    Ok(())
}
