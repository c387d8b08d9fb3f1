#![allow(dead_code)]

use clusterkit_core::design::{ClusterBlocks, ClusteredDataset};
use clusterkit_core::estimator::{ols_fit, FitResult};
use clusterkit_core::{DMatrix, DVector};

pub const SIZES: [usize; 8] = [3, 4, 5, 6, 7, 3, 8, 4];

/// Deterministic 40-row design with 8 unequal clusters and k = 3.
pub fn reference() -> ClusteredDataset {
    let labels: Vec<usize> = SIZES.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
    let n = labels.len();
    let x = DMatrix::from_fn(n, 3, |i, c| {
        let (fi, g) = (i as f64, labels[i]);
        match c {
            0 => 1.0,
            1 => (fi * 0.7).sin() + (g % 3) as f64 * 0.2,
            _ => (fi * 1.3).cos(),
        }
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let (fi, gf) = (i as f64, labels[i] as f64);
            1.0 + 0.5 * x[(i, 1)] - 0.3 * x[(i, 2)] + (fi * 2.1).sin() * (1.0 + gf * 0.1) + 0.3 * (gf * 1.7).cos()
        })
        .collect();
    let dim2: Vec<usize> = (0..n).map(|i| i % 4).collect();
    ClusteredDataset::new(y, x, vec!["const".into(), "x1".into(), "x2".into()], &labels, Some(&dim2)).unwrap()
}

pub fn fit(d: &ClusteredDataset) -> (ClusterBlocks, FitResult) {
    let b = ClusterBlocks::build(d);
    let f = ols_fit(d, &b).unwrap();
    (b, f)
}

pub fn mat(rows: [[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| rows[i][j])
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

pub fn vec_close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

/// Singleton-cluster copy of `d`.
pub fn singletons(d: &ClusteredDataset) -> ClusteredDataset {
    ClusteredDataset::from_sizes(d.y().as_slice().to_vec(), d.x().clone(), d.column_names().to_vec(), &vec![1; d.n()])
        .unwrap()
}
