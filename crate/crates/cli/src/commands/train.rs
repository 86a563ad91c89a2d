use std::fmt::Write as _;
use std::time::Instant;

use infochoice::trainer::{Trainer, TrainerState};

use super::{Context, CHECKPOINT_FILE, STATE_FILE};
use crate::error::{CliError, CliResult};
use crate::output::Sink;

/// Persists everything a later `--resume` or `report` needs after one epoch.
fn save_progress(ctx: &Context, sink: &Sink, state: &TrainerState) -> CliResult<()> {
    let mut state = state.clone();
    if !ctx.timing {
        for r in &mut state.history.epochs {
            r.seconds = 0.0;
        }
    }
    state.save(sink.path(STATE_FILE))?;
    state.best_params.save(sink.path(CHECKPOINT_FILE), &state.schema_hash)?;
    sink.table("history.csv", |buf| state.history.write_csv(buf, ctx.timing))?;
    Ok(())
}

/// Trains (or resumes training) and writes the best checkpoint, the resumable
/// state, the per-epoch history and a summary.
pub fn train(ctx: &Context, resume: bool) -> CliResult<()> {
    let (train, valid) = ctx.datasets()?;
    let cfg = ctx.cfg.config.train.clone();
    let schema_hash = train.schema().hash();
    let sink = Sink::new(ctx.out(), ctx.sink(&schema_hash, cfg.seed)?.provenance.with_training(&cfg))?;

    let mut trainer = if resume {
        let path = sink.path(STATE_FILE);
        if !path.exists() {
            return Err(CliError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no trainer state to resume from"),
            ));
        }
        let state = TrainerState::load(&path)?;
        println!("resuming after epoch {}", state.epochs_done);
        Trainer::resume(&train, &valid, state, &cfg)?
    } else {
        Trainer::new(&train, &valid, cfg.clone())?
    };

    let start = Instant::now();
    while !trainer.is_finished() {
        let rec = trainer.run_epoch()?.clone();
        save_progress(ctx, &sink, trainer.state())?;
        println!("epoch {:>4}  train NLL {:.6}  validation NLL {:.6}", rec.epoch, rec.train_nll, rec.valid_nll);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let state = trainer.state();
    if state.epochs_done == 0 {
        save_progress(ctx, &sink, state)?;
    }

    let mut summary = String::new();
    if cfg.latent_count == 0 {
        let _ = writeln!(summary, "MNL mode: no latent variables, the model is a multinomial logit");
    } else {
        let _ = writeln!(summary, "latent variables: {}", cfg.latent_count);
    }
    let _ = writeln!(summary, "epochs run: {}", state.epochs_done);
    match state.history.best() {
        Some(best) => {
            let _ = writeln!(summary, "best epoch: {}", best.epoch);
            let _ = writeln!(summary, "best validation NLL: {:.8}", best.valid_nll);
            let _ = writeln!(summary, "train NLL at best epoch: {:.8}", best.train_nll);
        }
        None => {
            let _ = writeln!(summary, "best epoch: none (no epochs run)");
        }
    }
    let _ = writeln!(summary, "stopped early: {}", state.history.stopped_early);
    let _ = writeln!(summary, "best parameters checksum: {}", state.best_params.checksum());
    let mut printed = summary.clone();
    let _ = writeln!(printed, "wall time: {elapsed:.2}s");
    if ctx.timing {
        summary = printed.clone();
    }
    sink.text("train_summary.txt", &summary)?;
    print!("{printed}");
    Ok(())
}
