//! Cluster-heterogeneity diagnostics and red-flag reporting.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::crve::{cv1, t_test, TestResult};
use crate::design::{ClusterBlocks, ClusteredDataset};
use crate::estimator::{jackknife_estimates, ols_fit, FitResult, JackknifeSet};
use crate::svtest::partial_out;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LeverageProfile {
    pub coef: usize,
    pub coef_name: String,
    /// Share of the partialled-out sum of squares of `x_j` in each cluster.
    pub leverage: Vec<f64>,
    pub scaled_variance: f64,
    /// `G / (1 + V_s)`.
    pub g_star0: f64,
}

/// `V_s = G²/(G−1) Σ (L_g − 1/G)²`.
pub fn scaled_variance(leverage: &[f64]) -> f64 {
    let g = leverage.len() as f64;
    if leverage.len() < 2 {
        return 0.0;
    }
    let ss: f64 = leverage.iter().map(|l| (l - 1.0 / g) * (l - 1.0 / g)).sum();
    g * g / (g - 1.0) * ss
}

pub fn partial_leverage_profile(d: &ClusteredDataset, j: usize) -> Result<LeverageProfile> {
    let z = partial_out(d, j)?;
    let total = z.dot(&z);
    let scale = d.x().column(j).dot(&d.x().column(j));
    if !(total > 1e-12 * scale) {
        return Err(Error::ZeroPartialVariance { index: j });
    }
    let leverage: Vec<f64> =
        d.ranges().iter().map(|r| z.rows(r.start, r.len()).iter().map(|v| v * v).sum::<f64>() / total).collect();
    let scaled_variance = scaled_variance(&leverage);
    Ok(LeverageProfile {
        coef: j,
        coef_name: d.column_names()[j].clone(),
        g_star0: leverage.len() as f64 / (1.0 + scaled_variance),
        leverage,
        scaled_variance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    /// Within-cluster residual variance; `None` for singletons.
    pub sigma2: Vec<Option<f64>>,
    pub mean: f64,
    /// Coefficient of variation of the available `sigma2`, population form.
    pub cv: f64,
}

pub fn cluster_variance_profile(d: &ClusteredDataset, f: &FitResult) -> VarianceProfile {
    let sigma2: Vec<Option<f64>> = d
        .ranges()
        .iter()
        .map(|r| {
            if r.len() < 2 {
                return None;
            }
            let u = f.residuals.rows(r.start, r.len());
            let mean = u.mean();
            Some(u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r.len() - 1) as f64)
        })
        .collect();
    let avail: Vec<f64> = sigma2.iter().flatten().copied().collect();
    let (mean, cv) = if avail.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let m = avail.iter().sum::<f64>() / avail.len() as f64;
        let var = avail.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / avail.len() as f64;
        (m, if m > 0.0 { libm::sqrt(var) / m } else { 0.0 })
    };
    VarianceProfile { sigma2, mean, cv }
}

#[derive(Clone, Debug)]
pub struct TreatmentVarianceTest {
    /// Average squared residual for controls.
    pub eta1: f64,
    /// Treated minus control average squared residual.
    pub eta2: f64,
    pub ratio: f64,
    /// `None` when the CV1 variance of `η̂₂` is zero.
    pub test: Option<TestResult>,
}

/// Regresses `û²` on `(1, T)` and tests `η₂ = 0` with CV1 and `t(G−1)`.
pub fn treatment_variance_test(d: &ClusteredDataset, f: &FitResult, t_col: usize) -> Result<TreatmentVarianceTest> {
    if t_col >= d.k() {
        return Err(Error::BadCoefficient { index: t_col, k: d.k() });
    }
    let t = d.x().column(t_col);
    if t.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("treatment column must be binary 0/1".into()));
    }
    let treated = t.iter().filter(|&&v| v == 1.0).count();
    if treated == d.n() {
        return Err(Error::DegenerateTreatment("all observations treated"));
    }
    if treated == 0 {
        return Err(Error::DegenerateTreatment("no observation treated"));
    }
    let x = DMatrix::from_fn(d.n(), 2, |i, c| if c == 0 { 1.0 } else { t[i] });
    let u2 = f.residuals.map(|u| u * u);
    let aux = d.with_x(x, vec!["const".into(), "treated".into()])?.with_y(u2);
    let b = ClusterBlocks::build(&aux);
    let fit = ols_fit(&aux, &b)?;
    let ve = cv1(&b, &fit);
    let test = match t_test(&ve, &fit, 1, 0.0, 0.05) {
        Ok(t) => Some(t),
        Err(Error::ZeroVariance { .. }) => None,
        Err(e) => return Err(e),
    };
    let (eta1, eta2) = (fit.beta[0], fit.beta[1]);
    Ok(TreatmentVarianceTest { eta1, eta2, ratio: eta2 / eta1, test })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmitOneDispersion {
    pub coef: usize,
    /// `β̂_j^(g) − β̂_j`; `None` where the deletion is not computable.
    pub deltas: Vec<Option<f64>>,
    pub iqr: f64,
    pub max_cluster: Option<usize>,
    pub max_abs_delta: f64,
    /// Clusters with `|delta|` above the IQR multiple (3 by default).
    pub flagged: Vec<usize>,
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn omit_one_dispersion(jk: &JackknifeSet, f: &FitResult, j: usize) -> OmitOneDispersion {
    omit_one_with_multiple(jk, f, j, 3.0)
}

fn omit_one_with_multiple(jk: &JackknifeSet, f: &FitResult, j: usize, multiple: f64) -> OmitOneDispersion {
    let deltas: Vec<Option<f64>> = jk.beta_g.iter().map(|b| b.as_ref().map(|b| b[j] - f.beta[j])).collect();
    let mut avail: Vec<f64> = deltas.iter().flatten().copied().collect();
    avail.sort_by(|a, b| a.total_cmp(b));
    let iqr = if avail.is_empty() { 0.0 } else { quantile_sorted(&avail, 0.75) - quantile_sorted(&avail, 0.25) };
    let mut max_cluster = None;
    let mut max_abs_delta = 0.0;
    let mut flagged = Vec::new();
    for (g, dl) in deltas.iter().enumerate() {
        if let Some(dl) = dl {
            if max_cluster.is_none() || dl.abs() > max_abs_delta {
                max_cluster = Some(g);
                max_abs_delta = dl.abs();
            }
            if dl.abs() > multiple * iqr {
                flagged.push(g);
            }
        }
    }
    OmitOneDispersion { coef: j, deltas, iqr, max_cluster, max_abs_delta, flagged }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RedFlag {
    FewClusters,
    FewTreatedClusters,
    FewControlClusters,
    DominantCluster,
    LowEffectiveClusters,
    HighVarianceSpread,
    TreatmentVarianceGap,
    ExtremeOmitOne,
}

impl RedFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RedFlag::FewClusters => "FewClusters",
            RedFlag::FewTreatedClusters => "FewTreatedClusters",
            RedFlag::FewControlClusters => "FewControlClusters",
            RedFlag::DominantCluster => "DominantCluster",
            RedFlag::LowEffectiveClusters => "LowEffectiveClusters",
            RedFlag::HighVarianceSpread => "HighVarianceSpread",
            RedFlag::TreatmentVarianceGap => "TreatmentVarianceGap",
            RedFlag::ExtremeOmitOne => "ExtremeOmitOne",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub min_clusters: usize,
    pub min_treated_clusters: usize,
    pub max_cluster_share: f64,
    /// Flag when `G*(0) < G · low_g_star_fraction`.
    pub low_g_star_fraction: f64,
    pub max_variance_cv: f64,
    pub eta_p_value: f64,
    pub eta_ratio: f64,
    pub omit_one_iqr_multiple: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_clusters: 20,
            min_treated_clusters: 6,
            max_cluster_share: 0.25,
            low_g_star_fraction: 1.0 / 3.0,
            max_variance_cv: 1.0,
            eta_p_value: 0.05,
            eta_ratio: 0.5,
            omit_one_iqr_multiple: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeSummary {
    pub min: usize,
    pub median: f64,
    pub max: usize,
    pub largest_share: f64,
}

#[derive(Clone, Debug)]
pub struct RedFlagReport {
    pub g: usize,
    pub n: usize,
    pub sizes: SizeSummary,
    /// Clusters with at least one treated observation, and the rest.
    pub treated_clusters: Option<(usize, usize)>,
    pub leverage: Option<LeverageProfile>,
    pub variance: VarianceProfile,
    pub treatment_variance: Option<TreatmentVarianceTest>,
    pub omit_one: Option<OmitOneDispersion>,
    pub thresholds: Thresholds,
    pub flags: Vec<RedFlag>,
    pub notes: Vec<String>,
}

pub fn size_summary(sizes: &[usize]) -> SizeSummary {
    let mut s = sizes.to_vec();
    s.sort_unstable();
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] as f64 } else { (s[m / 2 - 1] + s[m / 2]) as f64 / 2.0 };
    let total: usize = s.iter().sum();
    SizeSummary { min: s[0], median, max: s[m - 1], largest_share: s[m - 1] as f64 / total as f64 }
}

fn treated_cluster_counts(d: &ClusteredDataset, t_col: usize) -> (usize, usize) {
    let t = d.x().column(t_col);
    let g1 = d.ranges().iter().filter(|r| (r.start..r.end).any(|i| t[i] != 0.0)).count();
    (g1, d.g() - g1)
}

/// Runs every diagnostic for coefficient `j`. Components that cannot be
/// computed are left empty and explained in `notes`.
pub fn red_flag_report(d: &ClusteredDataset, f: &FitResult, j: usize, th: &Thresholds) -> Result<RedFlagReport> {
    if j >= d.k() {
        return Err(Error::BadCoefficient { index: j, k: d.k() });
    }
    let mut notes = Vec::new();
    let mut flags = Vec::new();
    let g = d.g();
    let sizes = size_summary(&d.cluster_sizes());

    if g < th.min_clusters {
        flags.push(RedFlag::FewClusters);
    }
    if sizes.largest_share > th.max_cluster_share {
        flags.push(RedFlag::DominantCluster);
    }

    let treated_clusters = d.treatment_col().map(|t| treated_cluster_counts(d, t));
    if let Some((g1, g0)) = treated_clusters {
        if g1 < th.min_treated_clusters {
            flags.push(RedFlag::FewTreatedClusters);
        }
        if g0 < th.min_treated_clusters {
            flags.push(RedFlag::FewControlClusters);
        }
    }

    let leverage = match partial_leverage_profile(d, j) {
        Ok(p) => {
            if p.g_star0 < g as f64 * th.low_g_star_fraction {
                flags.push(RedFlag::LowEffectiveClusters);
            }
            Some(p)
        }
        Err(e) => {
            notes.push(alloc::format!("leverage profile unavailable: {e}"));
            None
        }
    };
    notes.push("G*(0) uses the cv-squared convention G/(1+V_s)".into());

    let variance = cluster_variance_profile(d, f);
    if variance.cv > th.max_variance_cv {
        flags.push(RedFlag::HighVarianceSpread);
    }

    let treatment_variance = match d.treatment_col() {
        Some(t) => match treatment_variance_test(d, f, t) {
            Ok(tv) => {
                if tv.test.as_ref().is_some_and(|t| t.p_value < th.eta_p_value) && tv.ratio > th.eta_ratio {
                    flags.push(RedFlag::TreatmentVarianceGap);
                }
                Some(tv)
            }
            Err(e) => {
                notes.push(alloc::format!("treatment variance test unavailable: {e}"));
                None
            }
        },
        None => None,
    };

    let omit_one = match jackknife_estimates(&ClusterBlocks::build(d)) {
        Ok(jk) => {
            let o = omit_one_with_multiple(&jk, f, j, th.omit_one_iqr_multiple);
            if !o.flagged.is_empty() {
                flags.push(RedFlag::ExtremeOmitOne);
            }
            Some(o)
        }
        Err(e) => {
            notes.push(alloc::format!("omit-one estimates unavailable: {e}"));
            None
        }
    };
    if sizes.min == 1 && g > 2 {
        notes.push("a singleton cluster is present; t(G-1) is kept although t(G-2) may be safer".into());
    }
    flags.sort();

    Ok(RedFlagReport {
        g,
        n: d.n(),
        sizes,
        treated_clusters,
        leverage,
        variance,
        treatment_variance,
        omit_one,
        thresholds: *th,
        flags,
        notes,
    })
}
