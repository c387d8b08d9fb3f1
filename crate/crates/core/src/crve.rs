//! CV1, CV2 and CV3 cluster-robust variance matrices and t tests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::design::{ClusterBlocks, ClusteredDataset};
use crate::dist::{student_t_quantile, student_t_two_sided};
use crate::estimator::{m_block, FitResult, JackknifeSet};
use crate::linalg::{add_outer, sandwich, sym_inv_sqrt};
use crate::{Error, Result};

/// Clusters larger than this make the CV2 block eigendecompositions slow.
pub const CV2_LARGE_CLUSTER: usize = 2000;
/// Smallest admissible eigenvalue of an `M_gg` block.
pub const BLOCK_EIG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    Cv1,
    Cv2,
    Cv3,
    Hc1,
    Hc2,
    Hc3,
    TwoWay,
}

impl VarianceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceKind::Cv1 => "CV1",
            VarianceKind::Cv2 => "CV2",
            VarianceKind::Cv3 => "CV3",
            VarianceKind::Hc1 => "HC1",
            VarianceKind::Hc2 => "HC2",
            VarianceKind::Hc3 => "HC3",
            VarianceKind::TwoWay => "TWOWAY",
        }
    }
}

impl fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A k×k sandwich estimate plus the reference degrees of freedom.
#[derive(Clone, Debug)]
pub struct VarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: VarianceKind,
    pub dof: f64,
    /// Clusters that actually entered the estimate.
    pub effective_g: usize,
    /// Clusters excluded (CV3) or handled by pseudo-inverse (CV2).
    pub flagged: Vec<usize>,
    pub warnings: Vec<String>,
}

impl VarianceEstimate {
    pub fn se(&self, j: usize) -> f64 {
        libm::sqrt(self.matrix[(j, j)].max(0.0))
    }

    pub fn with_dof(mut self, dof: f64) -> Self {
        self.dof = dof;
        self
    }
}

/// `G(N−1) / ((G−1)(N−k))`.
pub fn cv1_scalar(g: usize, n: usize, k: usize) -> f64 {
    let (g, n, k) = (g as f64, n as f64, k as f64);
    g * (n - 1.0) / ((g - 1.0) * (n - k))
}

fn all_singletons(b: &ClusterBlocks) -> bool {
    b.ranges.iter().all(|r| r.len() == 1)
}

/// `Σ_g s_g s_gᵀ`.
pub fn score_filling(scores: &[DVector<f64>]) -> DMatrix<f64> {
    let k = scores.first().map_or(0, |s| s.len());
    let mut acc = DMatrix::zeros(k, k);
    for s in scores {
        add_outer(&mut acc, s, 1.0);
    }
    acc
}

pub fn cv1(b: &ClusterBlocks, f: &FitResult) -> VarianceEstimate {
    let g = b.g();
    let scale = cv1_scalar(g, b.n, b.k());
    let matrix = sandwich(&f.xtx_inv, &score_filling(&f.scores)) * scale;
    let kind = if all_singletons(b) { VarianceKind::Hc1 } else { VarianceKind::Cv1 };
    VarianceEstimate { matrix, kind, dof: (g - 1) as f64, effective_g: g, flagged: Vec::new(), warnings: Vec::new() }
}

/// Rescaled-block estimator: scores `X_gᵀ M_gg^{-1/2} û_g`, no leading scalar.
pub fn cv2(d: &ClusteredDataset, f: &FitResult) -> VarianceEstimate {
    let g = d.g();
    let mut warnings = Vec::new();
    let largest = d.ranges().iter().map(|r| r.len()).max().unwrap_or(0);
    if largest > CV2_LARGE_CLUSTER {
        warnings.push(format!("CV2 eigendecomposes a {largest}x{largest} block; this is slow"));
    }
    let mut flagged = Vec::new();
    let scores: Vec<DVector<f64>> = d
        .ranges()
        .iter()
        .enumerate()
        .map(|(cg, r)| {
            let m = m_block(d, f, cg);
            let (root, near_singular) = sym_inv_sqrt(&m, BLOCK_EIG_TOL);
            if near_singular {
                flagged.push(cg);
            }
            let u = f.residuals.rows(r.start, r.len());
            let xg = d.x().rows(r.start, r.len());
            xg.transpose() * (root * u)
        })
        .collect();
    if !flagged.is_empty() {
        warnings.push(format!("{} cluster block(s) near singular; pseudo-inverse root used", flagged.len()));
    }
    let matrix = sandwich(&f.xtx_inv, &score_filling(&scores));
    let kind = if d.ranges().iter().all(|r| r.len() == 1) { VarianceKind::Hc2 } else { VarianceKind::Cv2 };
    VarianceEstimate { matrix, kind, dof: (g - 1) as f64, effective_g: g, flagged, warnings }
}

/// Cluster jackknife `(G−1)/G Σ_g (β̂⁽ᵍ⁾ − β̂)(β̂⁽ᵍ⁾ − β̂)ᵀ` over computable
/// deletions, with G counting only those.
pub fn cv3(jk: &JackknifeSet, f: &FitResult) -> Result<VarianceEstimate> {
    let used = jk.n_computable();
    if used < 2 {
        return Err(Error::TooFewDeletions { available: used });
    }
    let k = f.k();
    let mut acc = DMatrix::zeros(k, k);
    let mut flagged = Vec::new();
    for (g, bg) in jk.beta_g.iter().enumerate() {
        match bg {
            Some(bg) => add_outer(&mut acc, &(bg - &f.beta), 1.0),
            None => flagged.push(g),
        }
    }
    let gf = used as f64;
    let mut warnings = Vec::new();
    if !flagged.is_empty() {
        warnings.push(format!("{} singular deletion(s) excluded from CV3", flagged.len()));
    }
    let kind = if jk.beta_g.len() == f.residuals.len() { VarianceKind::Hc3 } else { VarianceKind::Cv3 };
    Ok(VarianceEstimate { matrix: acc * ((gf - 1.0) / gf), kind, dof: gf - 1.0, effective_g: used, flagged, warnings })
}

/// Outcome of a single-coefficient test.
#[derive(Clone, Debug, PartialEq)]
pub struct TestResult {
    pub coef: f64,
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub dof: f64,
    pub method: String,
}

/// t test of `β_j = β0j` against t(dof), with a level `1−α` interval.
pub fn t_test(ve: &VarianceEstimate, f: &FitResult, j: usize, beta0: f64, alpha: f64) -> Result<TestResult> {
    if j >= f.k() {
        return Err(Error::BadCoefficient { index: j, k: f.k() });
    }
    let var = ve.matrix[(j, j)];
    if !(var > 0.0) {
        return Err(Error::ZeroVariance { index: j });
    }
    Ok(t_test_from_se(f.beta[j], libm::sqrt(var), ve.dof, beta0, alpha, ve.kind.as_str()))
}

pub fn t_test_from_se(coef: f64, se: f64, dof: f64, beta0: f64, alpha: f64, method: &str) -> TestResult {
    let t_stat = (coef - beta0) / se;
    let p_value = student_t_two_sided(t_stat, dof);
    let crit = student_t_quantile(1.0 - alpha / 2.0, dof);
    TestResult {
        coef,
        se,
        t_stat,
        p_value,
        ci_lower: coef - se * crit,
        ci_upper: coef + se * crit,
        dof,
        method: String::from(method),
    }
}

/// CV1 variance of element j computed from scores only:
/// `scale · Σ_g (aᵀ s_g)²` with `a = (XᵀX)⁻¹ e_j`.
pub fn cv1_var_j(xtx_inv: &DMatrix<f64>, scores: &[DVector<f64>], j: usize, scale: f64) -> f64 {
    let a = xtx_inv.column(j);
    scale * scores.iter().map(|s| { let p = a.dot(s); p * p }).sum::<f64>()
}
