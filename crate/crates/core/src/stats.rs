//! Batch-means confidence intervals for ergodic averages.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and 95% confidence half-width from `n` batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub half_width: f64,
    pub n_batches: usize,
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Combines equally weighted batch means into a mean and a 95% half-width.
///
/// `overall` is the mean to report; it is usually the full-window average,
/// which equals the average of the batch means when batches have equal length.
pub fn batch_means(batches: &[f64], overall: f64) -> BatchMeans {
    let n = batches.len();
    assert!(n >= 2, "need at least two batches");
    let avg = batches.iter().sum::<f64>() / n as f64;
    let var = batches.iter().map(|b| (b - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = t_quantile_975(n - 1) * (var / n as f64).sqrt();
    BatchMeans {
        mean: overall,
        half_width,
        n_batches: n,
    }
}
