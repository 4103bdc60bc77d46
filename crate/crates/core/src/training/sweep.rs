use std::fmt::Write as _;

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::ArchitectureSpec;
use crate::tensor::Real;

use super::trainer::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub p: f64,
    pub seed: u64,
    pub val_acc: f64,
    pub test_acc: f64,
}

pub const SWEEP_HEADER: &str = "K,p,seed,val_acc,test_acc";

/// Trains one model per `(K, p, seed)` grid point and scores its best
/// validation checkpoint on the test split.
pub fn sweep<T: Real>(
    data: &Dataset,
    arch: &ArchitectureSpec,
    base: &TrainConfig,
    patches: &[usize],
    probabilities: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if patches.is_empty() || probabilities.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep grid needs at least one K, one p and one seed".into()));
    }
    let train_set = data.split(Split::Train);
    let val_set = data.split(Split::Val);
    let test_set = data.split(Split::Test);
    if test_set.is_empty() {
        return Err(Error::Dataset("test split is empty".into()));
    }
    let mut rows = Vec::with_capacity(patches.len() * probabilities.len() * seeds.len());
    for &k in patches {
        for &p in probabilities {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.psm.patches = k;
                cfg.psm.shuffle_prob = p;
                cfg.seed = seed;
                let outcome = train::<T>(&train_set, &val_set, &data.class_names, arch, &cfg, None)?;
                let psm = crate::spectral::PsmConfig { seed, ..cfg.psm.clone() };
                let test = evaluate(&outcome.best_model, &test_set, &psm, &data.class_names, cfg.eval_batch_size)?;
                let row = SweepRow {
                    k,
                    p,
                    seed,
                    val_acc: outcome.state.best_val_accuracy,
                    test_acc: test.summary.accuracy,
                };
                info!("sweep K={k} p={p} seed={seed}: val {:.4} test {:.4}", row.val_acc, row.test_acc);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6},{:.6}", r.k, r.p, r.seed, r.val_acc, r.test_acc);
    }
    s
}
