//! Comparable-subsequence search between a generated and a recorded dataset.
//!
//! Only steering labels take part; images are never compared.

use std::fs::OpenOptions;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::offline::LabeledDataset;
use crate::seed;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_CONSISTENCY_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub offset_x: usize,
    pub length_l: usize,
    pub mean_abs_angle_diff: f64,
    pub comparable: bool,
    pub epsilon: f64,
}

/// Scans every offset of `real` and returns the one minimizing the summed
/// absolute label difference. Exact ties are broken uniformly using `seed`.
pub fn find_comparable_labels(sim: &[f64], real: &[f64], epsilon: f64, seed: u64) -> Result<MatchResult> {
    let n = sim.len();
    let k = real.len();
    if n == 0 {
        return Err(Error::EmptyInput("sim labels"));
    }
    if n > k {
        return Err(Error::SimLongerThanReal { sim: n, real: k });
    }
    let mut best = f64::INFINITY;
    let mut ties: Vec<usize> = Vec::new();
    for x in 0..=k - n {
        let window = &real[x..x + n];
        let mut sum = 0.0;
        for (a, b) in sim.iter().zip(window) {
            sum += (a - b).abs();
            if sum > best {
                break;
            }
        }
        if sum < best {
            best = sum;
            ties.clear();
            ties.push(x);
        } else if sum == best {
            ties.push(x);
        }
    }
    let offset_x = if ties.len() == 1 {
        ties[0]
    } else {
        ties[seed::rng(seed).random_range(0..ties.len())]
    };
    let mean = best / n as f64;
    Ok(MatchResult {
        offset_x,
        length_l: n,
        mean_abs_angle_diff: mean,
        comparable: mean <= epsilon,
        epsilon,
    })
}

pub fn find_comparable(sim: &LabeledDataset, real: &LabeledDataset, epsilon: f64, seed: u64) -> Result<MatchResult> {
    find_comparable_labels(&sim.labels(), &real.labels(), epsilon, seed)
}

/// Offline results agree when the two MAEs differ by at most `tol`.
pub fn consistency(mae_sim: f64, mae_real: f64, tol: f64) -> bool {
    (mae_sim - mae_real).abs() <= tol
}

/// Appends one row to a `matches.csv`, writing the header for a new file.
pub fn append_match_row(path: &Path, sim_id: &str, real_id: &str, m: &MatchResult) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(["sim_id", "real_id", "x", "l", "mean_diff", "comparable"])?;
    }
    w.write_record([
        sim_id.to_string(),
        real_id.to_string(),
        m.offset_x.to_string(),
        m.length_l.to_string(),
        m.mean_abs_angle_diff.to_string(),
        m.comparable.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
