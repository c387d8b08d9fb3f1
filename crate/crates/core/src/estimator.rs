//! OLS, restricted OLS, leave-one-cluster-out estimates and modified scores.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::design::{ClusterBlocks, ClusteredDataset, Restriction};
use crate::linalg::SpdFactor;
use crate::{Error, Result};

/// Unrestricted OLS fit with per-cluster empirical scores `ŝ_g = X_gᵀû_g`.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub scores: Vec<DVector<f64>>,
    pub factor: SpdFactor,
    pub xtx_inv: DMatrix<f64>,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.beta.len()
    }
    pub fn g(&self) -> usize {
        self.scores.len()
    }
}

/// Scores `X_gᵀy_g − X_gᵀX_g β` from the blocks alone.
pub fn block_scores(b: &ClusterBlocks, beta: &DVector<f64>) -> Vec<DVector<f64>> {
    b.xtx_g.iter().zip(&b.xty_g).map(|(a, c)| c - a * beta).collect()
}

pub fn ols_fit(d: &ClusteredDataset, b: &ClusterBlocks) -> Result<FitResult> {
    let factor = SpdFactor::new(&b.xtx)?;
    Ok(ols_fit_factored(d, b, factor))
}

/// OLS when `XᵀX` has already been factored (the regressors are reused
/// across Monte Carlo replicates).
pub fn ols_fit_factored(d: &ClusteredDataset, b: &ClusterBlocks, factor: SpdFactor) -> FitResult {
    let beta = factor.solve(&b.xty);
    let residuals = d.y() - d.x() * &beta;
    let scores = block_scores(b, &beta);
    let xtx_inv = factor.inverse();
    FitResult { beta, residuals, scores, factor, xtx_inv }
}

/// OLS subject to `β_j = β0j`, with k-element restricted scores.
#[derive(Clone, Debug)]
pub struct RestrictedFit {
    pub restriction: Restriction,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub scores: Vec<DVector<f64>>,
    /// Indices of the freely estimated coefficients.
    pub free: Vec<usize>,
    /// Factor of `ZᵀZ`, `Z` being X without column j (`None` when k = 1).
    pub free_factor: Option<SpdFactor>,
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Factor of `ZᵀZ` for the restriction on column `coef`; `None` when no
/// coefficient is free.
pub fn restricted_factor(b: &ClusterBlocks, coef: usize) -> Result<Option<SpdFactor>> {
    let free: Vec<usize> = (0..b.k()).filter(|&c| c != coef).collect();
    if free.is_empty() {
        return Ok(None);
    }
    SpdFactor::new(&submatrix(&b.xtx, &free, &free)).map(Some)
}

pub fn restricted_fit(d: &ClusteredDataset, b: &ClusterBlocks, r: Restriction) -> Result<RestrictedFit> {
    let factor = restricted_factor(b, r.coef)?;
    restricted_fit_factored(d, b, r, factor)
}

/// Restricted fit reusing a factor from [`restricted_factor`].
pub fn restricted_fit_factored(
    d: &ClusteredDataset,
    b: &ClusterBlocks,
    r: Restriction,
    free_factor: Option<SpdFactor>,
) -> Result<RestrictedFit> {
    let k = b.k();
    if r.coef >= k {
        return Err(Error::BadCoefficient { index: r.coef, k });
    }
    let free: Vec<usize> = (0..k).filter(|&c| c != r.coef).collect();
    let mut beta = DVector::zeros(k);
    beta[r.coef] = r.value;
    if let Some(f) = &free_factor {
        // Zᵀ(y − β0j x_j) = (Xᵀy)_free − β0j (XᵀX)_{free, j}
        let rhs = DVector::from_fn(free.len(), |i, _| b.xty[free[i]] - r.value * b.xtx[(free[i], r.coef)]);
        let bf = f.solve(&rhs);
        for (i, &c) in free.iter().enumerate() {
            beta[c] = bf[i];
        }
    }
    let residuals = d.y() - d.x() * &beta;
    let scores = block_scores(b, &beta);
    Ok(RestrictedFit { restriction: r, beta, residuals, scores, free, free_factor })
}

/// Leave-one-cluster-out estimates `β̂⁽ᵍ⁾`; `None` where the deletion leaves
/// a singular cross-product matrix.
#[derive(Clone, Debug)]
pub struct JackknifeSet {
    pub beta_g: Vec<Option<DVector<f64>>>,
}

impl JackknifeSet {
    pub fn computable(&self) -> Vec<bool> {
        self.beta_g.iter().map(Option::is_some).collect()
    }
    pub fn n_computable(&self) -> usize {
        self.beta_g.iter().filter(|b| b.is_some()).count()
    }
}

pub fn jackknife_estimates(b: &ClusterBlocks) -> Result<JackknifeSet> {
    let beta_g: Vec<Option<DVector<f64>>> = (0..b.g())
        .map(|g| {
            let a = &b.xtx - &b.xtx_g[g];
            let c = &b.xty - &b.xty_g[g];
            SpdFactor::new(&a).ok().map(|f| f.solve(&c))
        })
        .collect();
    if beta_g.iter().all(Option::is_none) {
        return Err(Error::AllDeletionsSingular);
    }
    Ok(JackknifeSet { beta_g })
}

/// Jackknife-corrected unrestricted scores `XᵀX(β̂ − β̂⁽ᵍ⁾)`, which equal
/// `X_gᵀ M_gg⁻¹ û_g`.
pub fn acute_scores(b: &ClusterBlocks, f: &FitResult, jk: &JackknifeSet) -> Result<Vec<DVector<f64>>> {
    jk.beta_g
        .iter()
        .enumerate()
        .map(|(g, bg)| match bg {
            Some(bg) => Ok(&b.xtx * (&f.beta - bg)),
            None => Err(Error::NotComputable { cluster: g }),
        })
        .collect()
}

/// Restricted analog of [`acute_scores`]: `X_gᵀ M̃_gg⁻¹ ũ_g`, where `M̃`
/// annihilates the freely estimated regressors. Evaluated through the
/// Woodbury form `ũ_g + Z_g(ZᵀZ − Z_gᵀZ_g)⁻¹Z_gᵀũ_g`, so only k×k blocks are
/// ever factored.
pub fn dotted_scores(b: &ClusterBlocks, rf: &RestrictedFit) -> Result<Vec<DVector<f64>>> {
    let free = &rf.free;
    if free.is_empty() {
        return Ok(rf.scores.clone());
    }
    let ztz = submatrix(&b.xtx, free, free);
    let all: Vec<usize> = (0..b.k()).collect();
    rf.scores
        .iter()
        .enumerate()
        .map(|(g, s)| {
            let xtx_g = &b.xtx_g[g];
            let inner = &ztz - submatrix(xtx_g, free, free);
            let fac = SpdFactor::new(&inner).map_err(|_| Error::NotComputable { cluster: g })?;
            let w = fac.solve(&subvector(s, free));
            Ok(s + submatrix(xtx_g, &all, free) * w)
        })
        .collect()
}

/// Which scores feed a bootstrap DGP or a modified-score computation.
#[derive(Clone, Copy, Debug)]
pub enum ScoreMode<'a> {
    Unrestricted,
    Restricted(&'a RestrictedFit),
}

pub fn modified_scores(
    b: &ClusterBlocks,
    f: &FitResult,
    jk: &JackknifeSet,
    mode: ScoreMode<'_>,
) -> Result<Vec<DVector<f64>>> {
    match mode {
        ScoreMode::Unrestricted => acute_scores(b, f, jk),
        ScoreMode::Restricted(rf) => dotted_scores(b, rf),
    }
}

/// Diagonal block `M_gg = I − X_g(XᵀX)⁻¹X_gᵀ` of the residual maker.
pub fn m_block(d: &ClusteredDataset, f: &FitResult, g: usize) -> DMatrix<f64> {
    let r = d.ranges()[g].clone();
    let xg = d.x().rows(r.start, r.len());
    let h = &xg * &f.xtx_inv * xg.transpose();
    DMatrix::identity(r.len(), r.len()) - h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::fixtures::ds1;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ds1_ols() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        assert!(close(f.beta[0], 1.0 / 15.0, 1e-13));
        assert!(close(f.beta[1], 0.6, 1e-13));
        let total = f.scores.iter().fold(DVector::zeros(2), |acc, s| acc + s);
        assert!(total.norm() < 1e-10 * b.xty.norm());
    }

    #[test]
    fn exact_fit_has_zero_residuals() {
        let x = DMatrix::from_fn(6, 2, |i, c| if c == 0 { 1.0 } else { (i * i) as f64 });
        let y: Vec<f64> = (0..6).map(|i| 2.0 - 0.5 * (i * i) as f64).collect();
        let d = ClusteredDataset::from_sizes(y, x, alloc::vec!["a".into(), "b".into()], &[3, 3]).unwrap();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        assert!(close(f.beta[0], 2.0, 1e-12) && close(f.beta[1], -0.5, 1e-12));
        assert!(f.residuals.amax() < 1e-12);
    }

    #[test]
    fn duplicated_column_fails() {
        let x = DMatrix::from_fn(4, 2, |i, _| i as f64 + 1.0);
        let d = ClusteredDataset::from_sizes(alloc::vec![1.0, 2.0, 0.0, 1.0], x, alloc::vec!["a".into(), "b".into()], &[2, 2])
            .unwrap();
        let b = ClusterBlocks::build(&d);
        assert!(matches!(ols_fit(&d, &b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn ds1_restricted_slope_zero_gives_mean() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let rf = restricted_fit(&d, &b, Restriction::new(1, 0.0, 2).unwrap()).unwrap();
        assert!(close(rf.beta[0], 13.0 / 6.0, 1e-13));
        assert_eq!(rf.beta[1], 0.0);
        // free component of the restricted score sum vanishes
        let total: f64 = rf.scores.iter().map(|s| s[0]).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn restriction_at_estimate_reproduces_ols() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let rf = restricted_fit(&d, &b, Restriction::new(1, f.beta[1], 2).unwrap()).unwrap();
        for c in 0..2 {
            assert!(close(rf.beta[c], f.beta[c], 1e-12));
        }
        for (s, t) in rf.scores.iter().zip(&f.scores) {
            assert!((s - t).amax() < 1e-12);
        }
    }

    #[test]
    fn single_regressor_restriction_estimates_nothing() {
        let x = DMatrix::from_fn(4, 1, |i, _| i as f64 + 1.0);
        let y = alloc::vec![1.0, 3.0, 2.0, 5.0];
        let d = ClusteredDataset::from_sizes(y.clone(), x.clone(), alloc::vec!["x".into()], &[2, 2]).unwrap();
        let b = ClusterBlocks::build(&d);
        let rf = restricted_fit(&d, &b, Restriction::new(0, 0.5, 1).unwrap()).unwrap();
        assert!(rf.free.is_empty());
        for i in 0..4 {
            assert_eq!(rf.residuals[i], y[i] - 0.5 * x[(i, 0)]);
        }
    }

    #[test]
    fn ds1_jackknife_first_deletion() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let jk = jackknife_estimates(&b).unwrap();
        let b1 = jk.beta_g[0].as_ref().unwrap();
        assert!(close(b1[0], -0.4, 1e-12));
        assert!(close(b1[1], 0.7, 1e-12));
        // the deletion satisfies its own normal equations
        let lhs = (&b.xtx - &b.xtx_g[0]) * b1;
        let rhs = &b.xty - &b.xty_g[0];
        assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn treated_only_in_one_cluster_flags_deletion() {
        // dummy nonzero only in cluster 3
        let x = DMatrix::from_fn(6, 2, |i, c| if c == 0 || i >= 4 { 1.0 } else { 0.0 });
        let y = alloc::vec![0.3, 0.1, -0.2, 0.5, 1.1, 0.9];
        let d = ClusteredDataset::from_sizes(y, x, alloc::vec!["a".into(), "t".into()], &[2, 2, 2]).unwrap();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let jk = jackknife_estimates(&b).unwrap();
        assert_eq!(jk.computable(), alloc::vec![true, true, false]);
        assert_eq!(acute_scores(&b, &f, &jk).unwrap_err(), Error::NotComputable { cluster: 2 });
    }

    #[test]
    fn identical_clusters_have_zero_acute_scores() {
        let rows = [1.0, 2.0, 4.0];
        let ys = [0.5, 1.5, 0.7];
        let x = DMatrix::from_fn(6, 2, |i, c| if c == 0 { 1.0 } else { rows[i % 3] });
        let y: Vec<f64> = (0..6).map(|i| ys[i % 3]).collect();
        let d = ClusteredDataset::from_sizes(y, x, alloc::vec!["a".into(), "b".into()], &[3, 3]).unwrap();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let jk = jackknife_estimates(&b).unwrap();
        for bg in jk.beta_g.iter().flatten() {
            assert!((bg - &f.beta).amax() < 1e-12);
        }
        for s in acute_scores(&b, &f, &jk).unwrap() {
            assert!(s.amax() < 1e-11);
        }
    }

    #[test]
    fn singleton_acute_scores_are_hc3_rescaled() {
        let x = DMatrix::from_fn(5, 2, |i, c| if c == 0 { 1.0 } else { [0.3, 1.9, -0.4, 2.2, 0.8][i] });
        let y = alloc::vec![1.0, 2.5, -0.3, 2.0, 1.4];
        let d = ClusteredDataset::from_sizes(y, x, alloc::vec!["a".into(), "b".into()], &[1; 5]).unwrap();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let jk = jackknife_estimates(&b).unwrap();
        let acute = acute_scores(&b, &f, &jk).unwrap();
        for i in 0..5 {
            let xi = d.x().row(i).transpose();
            let h = (xi.transpose() * &f.xtx_inv * &xi)[(0, 0)];
            let expect = &xi * (f.residuals[i] / (1.0 - h));
            assert!((&acute[i] - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn ds1_acute_first_cluster() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let jk = jackknife_estimates(&b).unwrap();
        let acute = acute_scores(&b, &f, &jk).unwrap();
        // XᵀX · (β̂ − β̂⁽¹⁾) = [[6,21],[21,91]] · (1/15 + 0.4, −0.1)
        let diff = [1.0 / 15.0 + 0.4, -0.1];
        let expect = [6.0 * diff[0] + 21.0 * diff[1], 21.0 * diff[0] + 91.0 * diff[1]];
        assert!(close(acute[0][0], expect[0], 1e-11));
        assert!(close(acute[0][1], expect[1], 1e-11));
    }

    #[test]
    fn dotted_scores_match_explicit_block_inverse() {
        let d = ds1();
        let b = ClusterBlocks::build(&d);
        let rf = restricted_fit(&d, &b, Restriction::new(1, 0.2, 2).unwrap()).unwrap();
        let dotted = dotted_scores(&b, &rf).unwrap();
        // explicit M̃_gg with Z = constant column
        for (g, r) in d.ranges().iter().enumerate() {
            let ng = r.len();
            let m = DMatrix::from_fn(ng, ng, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / 6.0);
            let u = DVector::from_fn(ng, |i, _| rf.residuals[r.start + i]);
            let xg = d.x().rows(r.start, ng);
            let expect = xg.transpose() * m.try_inverse().unwrap() * u;
            assert!((&dotted[g] - expect).amax() < 1e-10, "cluster {g}");
        }
    }
}
