//! The uninterpretable subspace beyond a single head: a projection shared by several
//! heads, random baselines, attribute purging by null-space projection, and probes of
//! learned directions.

mod probe;
mod purge;
mod shared;

pub use probe::{
    per_class_activation_ranking, probe_directions, write_activations_csv, ClassRanking, DirectionReport,
    PcaReport, ProbeReport,
};
pub use purge::{
    holdout_split, probe_auc, purge_attributes, AttributePurge, PurgeOptions, PurgeOrder, PurgeResult,
    PurgeStep,
};
pub use shared::{fit_heads_with_projection, fit_shared_subspace, Head, HeadSet, SharedFit, SharedHead};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::random_orthonormal_rows;
use crate::seed::rng;

/// An r x D matrix with orthonormal rows from a seeded Gaussian.
pub fn random_projection(dim: usize, rank: usize, seed: u64) -> Result<Array2<f64>> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!(
            "random projection rank must be in 1..={dim}, got {rank}"
        )));
    }
    Ok(random_orthonormal_rows(rank, dim, &mut rng(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_projection_rows_are_orthonormal() {
        for (d, r, s) in [(8, 1, 0), (8, 8, 1), (30, 5, 2)] {
            let u = random_projection(d, r, s).unwrap();
            let g = u.dot(&u.t());
            for i in 0..r {
                for j in 0..r {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[[i, j]] - want).abs() < 1e-12);
                }
            }
        }
        assert!(random_projection(3, 4, 0).is_err());
        assert!(random_projection(3, 0, 0).is_err());
    }
}
