//! Score-variance test of fine against coarse clustering for one coefficient.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Display;

use nalgebra::DVector;

use crate::design::{dense_labels, ClusterBlocks, ClusteredDataset};
use crate::dist::normal_sf;
use crate::estimator::{ols_fit, FitResult};
use crate::exec::Executor;
use crate::linalg::SpdFactor;
use crate::{Error, Result};

/// Fine clusters nested in coarse clusters, one label each per stored row.
#[derive(Clone, Debug)]
pub struct NestedClustering {
    coarse: Vec<usize>,
    fine: Vec<usize>,
    n_coarse: usize,
    n_fine: usize,
    /// Coarse cluster of each fine cluster.
    parent: Vec<usize>,
}

impl NestedClustering {
    pub fn new<L: Ord + Clone + Display>(coarse: &[L], fine: &[L]) -> Result<Self> {
        if coarse.len() != fine.len() {
            return Err(Error::Dimension("coarse and fine label columns differ in length".into()));
        }
        let (coarse, cn) = dense_labels(coarse);
        let (fine, fnames) = dense_labels(fine);
        let mut parent = vec![usize::MAX; fnames.len()];
        for (&c, &f) in coarse.iter().zip(&fine) {
            if parent[f] == usize::MAX {
                parent[f] = c;
            } else if parent[f] != c {
                return Err(Error::NotNested { fine: f });
            }
        }
        Ok(Self { coarse, fine, n_coarse: cn.len(), n_fine: fnames.len(), parent })
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }
    pub fn n_fine(&self) -> usize {
        self.n_fine
    }
    /// `M_g`, fine clusters per coarse cluster.
    pub fn fine_per_coarse(&self) -> Vec<usize> {
        let mut m = vec![0; self.n_coarse];
        for &p in &self.parent {
            m[p] += 1;
        }
        m
    }
    /// Coarse cluster of each fine cluster.
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }
    pub fn coarse_ids(&self) -> &[usize] {
        &self.coarse
    }
    pub fn fine_ids(&self) -> &[usize] {
        &self.fine
    }
}

/// Residual of regressing `x_j` on the other columns of X.
pub fn partial_out(d: &ClusteredDataset, j: usize) -> Result<DVector<f64>> {
    let k = d.k();
    if j >= k {
        return Err(Error::BadCoefficient { index: j, k });
    }
    let xj: DVector<f64> = d.x().column(j).into_owned();
    if k == 1 {
        return Ok(xj);
    }
    let others: Vec<usize> = (0..k).filter(|&c| c != j).collect();
    let z = d.x().select_columns(&others);
    let fac = SpdFactor::new(&z.tr_mul(&z))?;
    let coef = fac.solve(&z.tr_mul(&xj));
    Ok(xj - z * coef)
}

/// Components of the statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct SvStatistic {
    pub sigma2_coarse: f64,
    pub sigma2_fine: f64,
    pub theta_hat: f64,
    /// `θ̂_g`, one per coarse cluster.
    pub theta_g: Vec<f64>,
    pub sd: f64,
    pub sv_stat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvResult {
    pub statistic: SvStatistic,
    pub p_asymptotic: f64,
    pub p_bootstrap: Option<f64>,
    pub bootstrap_reps: usize,
}

/// Statistic from the partialled regressor `z` and residuals `û`, common
/// scale `1/N` for both variance estimates.
pub fn sv_statistic(z: &DVector<f64>, resid: &DVector<f64>, nest: &NestedClustering) -> SvStatistic {
    let n = z.len();
    let m = 1.0 / n as f64;
    let mut fine_scores = vec![0.0; nest.n_fine];
    for i in 0..n {
        fine_scores[nest.fine[i]] += z[i] * resid[i];
    }
    let mut sum = vec![0.0; nest.n_coarse];
    let mut sumsq = vec![0.0; nest.n_coarse];
    for (f, &s) in fine_scores.iter().enumerate() {
        let g = nest.parent[f];
        sum[g] += s;
        sumsq[g] += s * s;
    }
    let sigma2_coarse = m * sum.iter().map(|s| s * s).sum::<f64>();
    let sigma2_fine = m * sumsq.iter().sum::<f64>();
    let theta_g: Vec<f64> = sum.iter().zip(&sumsq).map(|(s, q)| m * (s * s - q)).collect();
    let theta_hat = sigma2_coarse - sigma2_fine;
    let sd = libm::sqrt(theta_g.iter().map(|t| t * t).sum::<f64>());
    let sv_stat = if sd > 0.0 { theta_hat / sd } else { f64::NAN };
    SvStatistic { sigma2_coarse, sigma2_fine, theta_hat, theta_g, sd, sv_stat }
}

/// Statistic for coefficient j of the OLS fit of `d`.
pub fn score_variance_statistic(d: &ClusteredDataset, f: &FitResult, nest: &NestedClustering, j: usize) -> Result<SvStatistic> {
    if nest.coarse.len() != d.n() {
        return Err(Error::Dimension("nesting labels do not match the dataset".into()));
    }
    let z = partial_out(d, j)?;
    Ok(sv_statistic(&z, &f.residuals, nest))
}

/// Asymptotic test (one-sided upper tail of N(0,1)).
pub fn score_variance_test(d: &ClusteredDataset, nest: &NestedClustering, j: usize) -> Result<SvResult> {
    if nest.fine_per_coarse().iter().all(|&m| m == 1) {
        return Err(Error::DegenerateNesting);
    }
    let b = ClusterBlocks::build(d);
    let f = ols_fit(d, &b)?;
    let statistic = score_variance_statistic(d, &f, nest, j)?;
    if !statistic.sv_stat.is_finite() {
        return Err(Error::ZeroVariance { index: j });
    }
    Ok(SvResult { p_asymptotic: normal_sf(statistic.sv_stat), statistic, p_bootstrap: None, bootstrap_reps: 0 })
}

/// Adds a WCU-C bootstrap P value `#{stat* ≥ stat}/B`, with Rademacher
/// weights drawn per fine cluster.
pub fn score_variance_bootstrap<E: Executor>(
    d: &ClusteredDataset,
    nest: &NestedClustering,
    j: usize,
    reps: usize,
    seed: u64,
    exec: &E,
) -> Result<SvResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let mut out = score_variance_test(d, nest, j)?;
    let b = ClusterBlocks::build(d);
    let f = ols_fit(d, &b)?;
    let z = partial_out(d, j)?;
    let x = d.x();
    let observed = out.statistic.sv_stat;
    let hits = exec.map(reps, |r| {
        let signs = crate::bootstrap::draw_weights(crate::bootstrap::Weights::Rademacher, nest.n_fine, r as u64, seed);
        let w = DVector::from_fn(d.n(), |i, _| signs[nest.fine[i]] * f.residuals[i]);
        let coef = f.factor.solve(&x.tr_mul(&w));
        let resid = w - x * coef;
        let s = sv_statistic(&z, &resid, nest).sv_stat;
        s.is_finite() && s >= observed
    });
    out.p_bootstrap = Some(hits.iter().filter(|&&h| h).count() as f64 / reps as f64);
    out.bootstrap_reps = reps;
    Ok(out)
}
