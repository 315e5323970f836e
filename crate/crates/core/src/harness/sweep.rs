use crate::error::{Error, Result};
use crate::model::{Network, NetworkConfig};
use crate::pruning::{PruneReport, PruneSession, PruneConfig, DEFAULT_NORM_EPSILON};

use super::{train_on, ExperimentRecord, MnistData, RunConfig};

pub const DEFAULT_FC_SIZES: [usize; 8] = [20, 40, 80, 120, 160, 200, 400, 600];
pub const DEFAULT_FC_REPEATS: usize = 3;
pub const DEFAULT_ANGLES: [f64; 15] = [
    10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0, 75.0, 80.0,
];
pub const DEFAULT_ANGLE_REPEATS: usize = 10;

/// Runs `f` over `items`, on a pool of `jobs` threads when `jobs > 1`.
/// Results come back in item order either way.
fn run_all<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync,
{
    if jobs <= 1 {
        return items.into_iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.into_par_iter().map(&f).collect())
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    Ok(())
}

/// Trains `repeats` networks per size. Repeat `r` uses seed `base.seed + r`,
/// so every size sees the same seeds.
pub fn sweep_fc_sizes(
    sizes: &[usize],
    repeats: usize,
    base: &RunConfig,
    data: &MnistData,
    jobs: usize,
) -> Result<Vec<ExperimentRecord>> {
    check_repeats(repeats)?;
    if sizes.is_empty() {
        return Err(Error::Config("no fully connected sizes given".into()));
    }
    for &h in sizes {
        NetworkConfig::new(h, base.seed)?;
    }
    let runs: Vec<RunConfig> = sizes
        .iter()
        .flat_map(|&h| (0..repeats as u64).map(move |r| (h, r)))
        .map(|(h, r)| RunConfig {
            fc_hidden: h,
            seed: base.seed.wrapping_add(r),
            ..base.clone()
        })
        .collect();
    run_all(runs, jobs, |cfg| {
        let id = format!("fc{}-s{}", cfg.fc_hidden, cfg.seed);
        train_on(&cfg, data, &id).map(|(_, rec)| rec)
    })
}

/// Trains `repeats` networks of `base.fc_hidden` with seeds `base.seed + r`.
pub fn train_models(base: &RunConfig, repeats: usize, data: &MnistData, jobs: usize) -> Result<Vec<(Network, ExperimentRecord)>> {
    check_repeats(repeats)?;
    let runs: Vec<RunConfig> = (0..repeats as u64)
        .map(|r| RunConfig {
            seed: base.seed.wrapping_add(r),
            ..base.clone()
        })
        .collect();
    run_all(runs, jobs, |cfg| {
        let id = format!("fc{}-s{}", cfg.fc_hidden, cfg.seed);
        train_on(&cfg, data, &id)
    })
}

/// One line of the angle sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneRow {
    pub run_id: String,
    pub report: PruneReport,
}

/// Prunes every model at every angle. Activations come from the first
/// `pattern_limit` training images; accuracy from the test split.
pub fn sweep_prune_angles(
    models: &[(String, Network)],
    angles: &[f64],
    data: &MnistData,
    pattern_limit: usize,
    jobs: usize,
) -> Result<Vec<PruneRow>> {
    if angles.is_empty() || models.is_empty() {
        return Err(Error::Config("angle sweep needs at least one angle and one model".into()));
    }
    for &a in angles {
        PruneConfig {
            angle_threshold_deg: a,
            pattern_limit,
            norm_epsilon: DEFAULT_NORM_EPSILON,
        }
        .validate()?;
    }
    let per_model = run_all(models.iter().collect(), jobs, |(id, net)| {
        let session = PruneSession::new(net, &data.train, &data.test, pattern_limit, DEFAULT_NORM_EPSILON)?;
        angles
            .iter()
            .map(|&a| {
                let (report, _) = session.prune(a)?;
                log::info!(
                    "{id}: {a} deg keeps {}/{} neurons, accuracy {:.4} -> {:.4}",
                    report.post_size,
                    report.pre_size,
                    report.pre_accuracy,
                    report.post_accuracy
                );
                Ok(PruneRow { run_id: id.clone(), report })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_model.into_iter().flatten().collect())
}
