use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dprune_core::dataset::FileNames;
use dprune_core::harness::{
    evaluate, summarize, sweep_fc_sizes, sweep_prune_angles, train_models, train_on, write_prune_csv, write_run_csv,
    MnistData, PruneRow, RunConfig,
};
use dprune_core::pruning::{prune_and_evaluate, PruneConfig, DEFAULT_NORM_EPSILON};
use dprune_core::Network;

use crate::args::{Cli, Command, DataArgs, TrainingArgs};

pub fn run(cli: Cli) -> Result<()> {
    let dir = cli.data_dir;
    match cli.command {
        Command::Train(a) => {
            let cfg = run_config(a.fc_hidden, &a.training, &a.data, &dir);
            let data = load(&dir, &a.data)?;
            let (net, rec) = train_on(&cfg, &data, &format!("fc{}-s{}", cfg.fc_hidden, cfg.seed))?;
            println!("final test accuracy {:.6} ({:.2}%)", rec.final_accuracy, 100.0 * rec.final_accuracy);
            if let Some(out) = &a.out {
                net.save(out)?;
            }
            if let Some(path) = &a.csv {
                write_run_csv(create(path)?, std::slice::from_ref(&rec), a.timing)?;
            }
        }
        Command::Eval(a) => {
            let net = Network::load(&a.model)?;
            let data = load(&dir, &a.data)?;
            let acc = evaluate(&net, &data.test)?;
            println!("test accuracy {acc:.6} ({:.2}%) on {} images, hidden size {}", 100.0 * acc, data.test.len(), net.hidden_size());
        }
        Command::Prune(a) => {
            let net = Network::load(&a.model)?;
            let data = load(&dir, &a.data)?;
            let cfg = PruneConfig {
                angle_threshold_deg: a.angle,
                pattern_limit: a.pattern_limit,
                norm_epsilon: DEFAULT_NORM_EPSILON,
            };
            let (report, pruned) = prune_and_evaluate(&net, &data.train, &data.test, &cfg)?;
            println!(
                "angle {}: hidden {} -> {} ({:.2}% removed: {} complementary pairs, {} merges), accuracy {:.2}% -> {:.2}%",
                a.angle,
                report.pre_size,
                report.post_size,
                100.0 * report.removal_fraction,
                report.plan.complementary_removals.len(),
                report.plan.similar_merges.len(),
                100.0 * report.pre_accuracy,
                100.0 * report.post_accuracy
            );
            if let Some(path) = &a.report {
                let run_id = a.run_id.clone().unwrap_or_else(|| stem(&a.model));
                append_prune_rows(path, &[PruneRow { run_id, report: report.clone() }])?;
            }
            if let Some(path) = &a.detail {
                report.write_json(path)?;
            }
            if let Some(out) = &a.out {
                match pruned {
                    Some(n) => n.save(out)?,
                    None => bail!("every hidden neuron was removed; no model written to {}", out.display()),
                }
            }
        }
        Command::SweepFc(a) => {
            let base = run_config(0, &a.training, &a.data, &dir);
            let data = load(&dir, &a.data)?;
            let records = sweep_fc_sizes(&a.sizes, a.repeats, &base, &data, a.jobs)?;
            write_run_csv(output(a.out.as_deref())?, &records, a.timing)?;
            for s in summarize(&records) {
                eprintln!(
                    "fc {:>3}: mean {:.2}%  max {:.2}%  over {} run(s)",
                    s.fc_hidden,
                    100.0 * s.mean_final,
                    100.0 * s.max_final,
                    s.runs
                );
            }
        }
        Command::SweepAngle(a) => {
            let data = load(&dir, &a.data)?;
            let models: Vec<(String, Network)> = if a.models.is_empty() {
                let base = run_config(a.fc_hidden, &a.training, &a.data, &dir);
                let trained = train_models(&base, a.repeats, &data, a.jobs)?;
                let mut out = Vec::with_capacity(trained.len());
                for (net, rec) in trained {
                    if let Some(d) = &a.save_models {
                        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
                        net.save(&d.join(format!("{}.bin", rec.run_id)))?;
                    }
                    out.push((rec.run_id, net));
                }
                out
            } else {
                a.models
                    .iter()
                    .map(|p| Ok((stem(p), Network::load(p)?)))
                    .collect::<Result<_>>()?
            };
            let rows = sweep_prune_angles(&models, &a.angles, &data, a.pattern_limit, a.jobs)?;
            write_prune_csv(output(a.out.as_deref())?, &rows, true)?;
            for &angle in &a.angles {
                let at: Vec<_> = rows.iter().filter(|r| r.report.angle_threshold_deg == angle).map(|r| &r.report).collect();
                let n = at.len() as f64;
                eprintln!(
                    "angle {angle:>4}: mean removed {:.2}%  mean accuracy drop {:.2} points",
                    100.0 * at.iter().map(|r| r.removal_fraction).sum::<f64>() / n,
                    at.iter().map(|r| r.acc_drop_points()).sum::<f64>() / n
                );
            }
        }
        Command::FetchData(a) => crate::fetch::fetch_data(&a.source, &dir)?,
    }
    Ok(())
}

fn run_config(fc_hidden: usize, t: &TrainingArgs, d: &DataArgs, dir: &Path) -> RunConfig {
    RunConfig {
        fc_hidden,
        epochs: t.epochs,
        batch_size: t.batch_size,
        lr: t.lr,
        momentum: t.momentum,
        seed: t.seed,
        train_limit: d.train_limit,
        test_limit: d.test_limit,
        data_dir: dir.to_path_buf(),
        output: None,
    }
}

fn load(dir: &Path, d: &DataArgs) -> Result<MnistData> {
    MnistData::load(dir, &FileNames::default(), d.train_limit, d.test_limit)
        .with_context(|| format!("loading MNIST from {} (try `dprune fetch-data`)", dir.display()))
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Appends rows, writing the header first if the file is new or empty.
fn append_prune_rows(path: &PathBuf, rows: &[PruneRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    write_prune_csv(file, rows, fresh)?;
    Ok(())
}
