use std::io::Write;

use crate::error::Result;

use super::{ExperimentRecord, PruneRow};
use crate::pruning::PruneReport;

fn acc(v: f64) -> String {
    format!("{v:.6}")
}

pub fn run_csv_header(epochs: usize) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "fc_hidden", "seed", "epochs", "batch", "lr", "momentum", "train_limit", "final_acc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=epochs).map(|e| format!("acc_epoch_{e}")));
    h.push("seconds".into());
    h
}

/// One run row padded to `epochs` accuracy columns. `seconds` stays empty
/// unless `timing` is set, so that repeated runs produce identical files.
pub fn run_csv_row(rec: &ExperimentRecord, epochs: usize, timing: bool) -> Vec<String> {
    let c = &rec.config;
    let mut row = vec![
        rec.run_id.clone(),
        c.fc_hidden.to_string(),
        c.seed.to_string(),
        c.epochs.to_string(),
        c.batch_size.to_string(),
        c.lr.to_string(),
        c.momentum.to_string(),
        c.train_limit.map_or(String::new(), |l| l.to_string()),
        acc(rec.final_accuracy),
    ];
    row.extend((0..epochs).map(|e| rec.epoch_accuracies.get(e).map_or(String::new(), |&a| acc(a))));
    row.push(if timing { format!("{:.3}", rec.seconds) } else { String::new() });
    row
}

/// Per-size aggregate over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub fc_hidden: usize,
    pub runs: usize,
    pub mean_final: f64,
    pub max_final: f64,
    pub mean_epochs: Vec<f64>,
    pub mean_seconds: f64,
    template: ExperimentRecord,
}

impl SizeSummary {
    /// The summary as a run row: run_id `summary`, no seed, means in every
    /// accuracy column.
    pub fn csv_row(&self, epochs: usize, timing: bool) -> Vec<String> {
        let rec = ExperimentRecord {
            run_id: "summary".into(),
            epoch_accuracies: self.mean_epochs.clone(),
            final_accuracy: self.mean_final,
            seconds: self.mean_seconds,
            ..self.template.clone()
        };
        let mut row = run_csv_row(&rec, epochs, timing);
        row[2] = String::new();
        row
    }
}

/// Groups records by hidden size, in order of first appearance.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SizeSummary> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in records {
        if !sizes.contains(&r.config.fc_hidden) {
            sizes.push(r.config.fc_hidden);
        }
    }
    sizes
        .into_iter()
        .map(|h| {
            let group: Vec<&ExperimentRecord> = records.iter().filter(|r| r.config.fc_hidden == h).collect();
            let n = group.len() as f64;
            let epochs = group.iter().map(|r| r.epoch_accuracies.len()).min().unwrap_or(0);
            SizeSummary {
                fc_hidden: h,
                runs: group.len(),
                mean_final: group.iter().map(|r| r.final_accuracy).sum::<f64>() / n,
                max_final: group.iter().map(|r| r.final_accuracy).fold(f64::NEG_INFINITY, f64::max),
                mean_epochs: (0..epochs)
                    .map(|e| group.iter().map(|r| r.epoch_accuracies[e]).sum::<f64>() / n)
                    .collect(),
                mean_seconds: group.iter().map(|r| r.seconds).sum::<f64>() / n,
                template: ExperimentRecord {
                    batch_losses: Vec::new(),
                    prune: None,
                    ..group[0].clone()
                },
            }
        })
        .collect()
}

/// Header, one row per run, then one summary row per size.
pub fn write_run_csv<W: Write>(out: W, records: &[ExperimentRecord], timing: bool) -> Result<()> {
    let epochs = records.iter().map(|r| r.config.epochs).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(run_csv_header(epochs))?;
    for r in records {
        w.write_record(run_csv_row(r, epochs, timing))?;
    }
    for s in summarize(records) {
        w.write_record(s.csv_row(epochs, timing))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn prune_csv_header() -> [&'static str; 11] {
    [
        "run_id",
        "angle_deg",
        "pre_size",
        "post_size",
        "removed_fraction",
        "pre_acc",
        "post_acc",
        "acc_drop_points",
        "acc_drop_relative",
        "n_complementary_pairs",
        "n_similar_merges",
    ]
}

pub fn prune_csv_row(run_id: &str, r: &PruneReport) -> Vec<String> {
    vec![
        run_id.to_string(),
        r.angle_threshold_deg.to_string(),
        r.pre_size.to_string(),
        r.post_size.to_string(),
        acc(r.removal_fraction),
        acc(r.pre_accuracy),
        acc(r.post_accuracy),
        format!("{:.4}", r.acc_drop_points()),
        acc(r.acc_drop_relative()),
        r.plan.complementary_removals.len().to_string(),
        r.plan.similar_merges.len().to_string(),
    ]
}

/// Writes prune rows, preceded by the header when `header` is set (pass
/// `false` when appending to an existing report).
pub fn write_prune_csv<W: Write>(out: W, rows: &[PruneRow], header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(prune_csv_header())?;
    }
    for row in rows {
        w.write_record(prune_csv_row(&row.run_id, &row.report))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
