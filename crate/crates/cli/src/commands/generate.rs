use infochoice::data::Dataset;

use super::report::fit_reports;
use super::Context;
use crate::error::CliResult;
use crate::output::Sink;

pub struct GenerateArgs<'a> {
    pub checkpoint: Option<&'a std::path::Path>,
    /// Score the synthetic records against the training data.
    pub fit: bool,
}

/// Draws synthetic records from a checkpoint and writes them in raw units.
pub fn generate(ctx: &Context, args: &GenerateArgs) -> CliResult<()> {
    let (train, _) = ctx.datasets()?;
    let params = ctx.checkpoint(args.checkpoint, &train)?;
    let g = &ctx.cfg.config.generate;
    let sink = Sink::new(
        ctx.out(),
        ctx.sink(&train.schema().hash(), g.seed)?
            .provenance
            .with("count", g.count)
            .with("burn_in", g.burn_in)
            .with("thin", g.thin)
            .with("chains", g.chains)
            .with("bins", g.bins),
    )?;
    let synthetic: Dataset = if args.fit {
        fit_reports(ctx, &sink, &params, &train)?
    } else {
        let opts = infochoice::generator::GenerateOptions {
            count: g.count,
            burn_in: g.burn_in,
            thin: g.thin,
            chains: g.chains,
            seed: g.seed,
        };
        infochoice::generator::generate_chains(&params, train.schema_arc(), &opts, Some(&train))?
    };
    let path = sink.table("synthetic.csv", |buf| synthetic.decode().write_csv(buf))?;
    println!("wrote {} synthetic records to {}", synthetic.len(), path.display());
    Ok(())
}
