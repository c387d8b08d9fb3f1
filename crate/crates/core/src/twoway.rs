//! Two-way clustered variance and the max-of-three standard error rule.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::crve::{cv1_scalar, score_filling, t_test_from_se, TestResult};
use crate::design::ClusteredDataset;
use crate::estimator::FitResult;
use crate::linalg::sandwich;
use crate::{Error, Result};

/// Per-label score sums `Σ_{i in c} x_i û_i`, accumulated in row order.
pub fn label_scores(d: &ClusteredDataset, resid: &DVector<f64>, labels: &[usize], n_labels: usize) -> Vec<DVector<f64>> {
    let k = d.k();
    let mut out = vec![DVector::zeros(k); n_labels];
    let x = d.x();
    for (i, &l) in labels.iter().enumerate() {
        let u = resid[i];
        for c in 0..k {
            out[l][c] += x[(i, c)] * u;
        }
    }
    out
}

/// Dense ids for the (dimension 1, dimension 2) pairs, first appearance.
pub fn intersection_labels(a: &[usize], b: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let labels = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let next = ids.len();
            *ids.entry((x, y)).or_insert(next)
        })
        .collect();
    (labels, ids.len())
}

/// CV1 leading scalar, or 1 when a dimension has a single cluster (its
/// filling is then the outer product of the total score, which is zero).
fn dim_scalar(count: usize, n: usize, k: usize) -> f64 {
    if count >= 2 {
        cv1_scalar(count, n, k)
    } else {
        1.0
    }
}

#[derive(Clone, Debug)]
pub struct TwoWayVariance {
    /// Scaled fillings for dimension 1, dimension 2 and the intersections.
    pub sigma_g: DMatrix<f64>,
    pub sigma_h: DMatrix<f64>,
    pub sigma_gh: DMatrix<f64>,
    /// `sigma_g + sigma_h − sigma_gh`.
    pub combined: DMatrix<f64>,
    /// Sandwich of `combined`.
    pub matrix: DMatrix<f64>,
    pub psd_flag: bool,
    pub min_eigenvalue: f64,
    pub g: usize,
    pub h: usize,
    pub n_intersections: usize,
}

pub fn twoway_variance(d: &ClusteredDataset, f: &FitResult) -> Result<TwoWayVariance> {
    let dim2 = d
        .cluster2_ids()
        .ok_or_else(|| Error::InvalidArgument("two-way clustering needs a second cluster column".into()))?;
    let dim1 = d.cluster_ids();
    let (n, k) = (d.n(), d.k());
    let g = d.g();
    let h = d.cluster2_names().len();
    let (inter, n_inter) = intersection_labels(dim1, dim2);

    let fill = |labels: &[usize], count: usize| {
        score_filling(&label_scores(d, &f.residuals, labels, count)) * dim_scalar(count, n, k)
    };
    let sigma_g = fill(dim1, g);
    let sigma_h = fill(dim2, h);
    let sigma_gh = fill(&inter, n_inter);
    let combined = &sigma_g + &sigma_h - &sigma_gh;
    let matrix = sandwich(&f.xtx_inv, &combined);
    let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let psd_flag = min_eigenvalue >= -1e-12 * scale;
    Ok(TwoWayVariance { sigma_g, sigma_h, sigma_gh, combined, matrix, psd_flag, min_eigenvalue, g, h, n_intersections: n_inter })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeSource {
    TwoWay,
    Dim1,
    Dim2,
}

impl SeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SeSource::TwoWay => "two-way",
            SeSource::Dim1 => "dimension 1",
            SeSource::Dim2 => "dimension 2",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaxSeResult {
    pub test: TestResult,
    pub se_dim1: f64,
    pub se_dim2: f64,
    /// `None` when the two-way diagonal entry is not positive.
    pub se_twoway: Option<f64>,
    pub source: SeSource,
    pub psd_flag: bool,
    pub negative_diagonal: bool,
    pub min_eigenvalue: f64,
}

/// Largest of the two one-way CV1 standard errors and the two-way one
/// (when defined); ties go to the two-way estimate. The t reference uses
/// `min(G, H) − 1` degrees of freedom.
pub fn robust_max_se(d: &ClusteredDataset, f: &FitResult, j: usize, beta0: f64, alpha: f64) -> Result<MaxSeResult> {
    if j >= d.k() {
        return Err(Error::BadCoefficient { index: j, k: d.k() });
    }
    let tw = twoway_variance(d, f)?;
    let one_way = |filling: &DMatrix<f64>| libm::sqrt(sandwich(&f.xtx_inv, filling)[(j, j)].max(0.0));
    let se_dim1 = one_way(&tw.sigma_g);
    let se_dim2 = one_way(&tw.sigma_h);
    let diag = tw.matrix[(j, j)];
    let se_twoway = (diag > 0.0).then(|| libm::sqrt(diag));

    let (mut se, mut source) = match se_twoway {
        Some(s) => (s, SeSource::TwoWay),
        None => (0.0, SeSource::Dim1),
    };
    if se_dim1 > se {
        se = se_dim1;
        source = SeSource::Dim1;
    }
    if se_dim2 > se {
        se = se_dim2;
        source = SeSource::Dim2;
    }
    if !(se > 0.0) {
        return Err(Error::ZeroVariance { index: j });
    }
    let dof = (tw.g.min(tw.h).max(2) - 1) as f64;
    let test = t_test_from_se(f.beta[j], se, dof, beta0, alpha, "max-se");
    Ok(MaxSeResult {
        test,
        se_dim1,
        se_dim2,
        se_twoway,
        source,
        psd_flag: tw.psd_flag,
        negative_diagonal: diag < 0.0,
        min_eigenvalue: tw.min_eigenvalue,
    })
}
