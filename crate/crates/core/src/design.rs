//! Clustered data model and per-cluster cross-product blocks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Display;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Maps arbitrary labels to dense ids `0..G` in order of first appearance.
pub fn dense_labels<L: Ord + Clone + Display>(labels: &[L]) -> (Vec<usize>, Vec<String>) {
    let mut ids = BTreeMap::new();
    let mut names = Vec::new();
    let dense = labels
        .iter()
        .map(|l| {
            *ids.entry(l.clone()).or_insert_with(|| {
                names.push(l.to_string());
                names.len() - 1
            })
        })
        .collect();
    (dense, names)
}

/// Regressand, regressors and one or two cluster dimensions.
///
/// Rows are stored cluster-contiguous (dimension 1), stable within each
/// cluster; `original_row` maps each stored row back to its input position.
/// Instances are immutable once built.
#[derive(Clone, Debug)]
pub struct ClusteredDataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    column_names: Vec<String>,
    cluster: Vec<usize>,
    cluster_names: Vec<String>,
    ranges: Vec<Range<usize>>,
    cluster2: Option<Vec<usize>>,
    cluster2_names: Vec<String>,
    treatment_col: Option<usize>,
    original_row: Vec<usize>,
}

impl ClusteredDataset {
    /// Builds a dataset from column data. Cluster labels of any ordered type
    /// are mapped to dense ids by first appearance and the rows are reordered
    /// so that every dimension-1 cluster is contiguous.
    pub fn new<L: Ord + Clone + Display>(
        y: Vec<f64>,
        x: DMatrix<f64>,
        column_names: Vec<String>,
        cluster: &[L],
        cluster2: Option<&[L]>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let k = x.ncols();
        if x.nrows() != n || cluster.len() != n || cluster2.is_some_and(|c| c.len() != n) {
            return Err(Error::Dimension(format!(
                "y has {n} rows, X has {} rows, cluster column has {}",
                x.nrows(),
                cluster.len()
            )));
        }
        if k == 0 || n < k {
            return Err(Error::Dimension(format!("need N >= k >= 1, got N={n}, k={k}")));
        }
        if column_names.len() != k {
            return Err(Error::Dimension(format!("{} column names for {k} regressors", column_names.len())));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in y or X".into()));
        }
        let (ids, cluster_names) = dense_labels(cluster);
        let g = cluster_names.len();
        if g < 2 {
            return Err(Error::TooFewClusters { found: g });
        }

        // stable counting sort by cluster id
        let mut counts = vec![0usize; g];
        for &c in &ids {
            counts[c] += 1;
        }
        let mut ranges = Vec::with_capacity(g);
        let mut start = 0;
        for &c in &counts {
            ranges.push(start..start + c);
            start += c;
        }
        let mut next: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        let mut order = vec![0usize; n];
        for (i, &c) in ids.iter().enumerate() {
            order[next[c]] = i;
            next[c] += 1;
        }

        let y = DVector::from_fn(n, |r, _| y[order[r]]);
        let x = DMatrix::from_fn(n, k, |r, c| x[(order[r], c)]);
        let cluster: Vec<usize> = order.iter().map(|&i| ids[i]).collect();
        let (cluster2, cluster2_names) = match cluster2 {
            Some(c2) => {
                let reordered: Vec<L> = order.iter().map(|&i| c2[i].clone()).collect();
                let (ids2, names2) = dense_labels(&reordered);
                (Some(ids2), names2)
            }
            None => (None, Vec::new()),
        };

        Ok(Self {
            y,
            x,
            column_names,
            cluster,
            cluster_names,
            ranges,
            cluster2,
            cluster2_names,
            treatment_col: None,
            original_row: order,
        })
    }

    /// Convenience constructor for contiguous clusters of the given sizes.
    pub fn from_sizes(y: Vec<f64>, x: DMatrix<f64>, column_names: Vec<String>, sizes: &[usize]) -> Result<Self> {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &s)| core::iter::repeat_n(g, s)).collect();
        Self::new(y, x, column_names, &labels, None)
    }

    /// Marks column `j` as the treatment regressor.
    pub fn with_treatment(mut self, j: usize) -> Result<Self> {
        if j >= self.k() {
            return Err(Error::BadCoefficient { index: j, k: self.k() });
        }
        self.treatment_col = Some(j);
        Ok(self)
    }

    /// Same clusters and regressors, new regressand (rows in stored order).
    pub fn with_y(&self, y: DVector<f64>) -> Self {
        assert_eq!(y.len(), self.n(), "regressand length must match the dataset");
        Self { y, ..self.clone() }
    }

    /// Same clusters and regressand, new regressor matrix (rows in stored order).
    pub fn with_x(&self, x: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if x.nrows() != self.n() || column_names.len() != x.ncols() || x.ncols() == 0 || x.ncols() > self.n() {
            return Err(Error::Dimension("replacement regressor matrix has the wrong shape".into()));
        }
        let treatment_col = self.treatment_col.filter(|&t| t < x.ncols());
        Ok(Self { x, column_names, treatment_col, ..self.clone() })
    }

    /// Replaces the second clustering dimension (labels in stored row order).
    pub fn with_cluster2<L: Ord + Clone + Display>(&self, labels: &[L]) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Dimension("second cluster column has the wrong length".into()));
        }
        let (ids, names) = dense_labels(labels);
        Ok(Self { cluster2: Some(ids), cluster2_names: names, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn k(&self) -> usize {
        self.x.ncols()
    }
    /// Number of dimension-1 clusters.
    pub fn g(&self) -> usize {
        self.ranges.len()
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster
    }
    pub fn cluster_names(&self) -> &[String] {
        &self.cluster_names
    }
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }
    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }
    pub fn cluster2_ids(&self) -> Option<&[usize]> {
        self.cluster2.as_deref()
    }
    pub fn cluster2_names(&self) -> &[String] {
        &self.cluster2_names
    }
    pub fn treatment_col(&self) -> Option<usize> {
        self.treatment_col
    }
    pub fn original_row(&self) -> &[usize] {
        &self.original_row
    }

    /// Multiplies every row of cluster g by `N_g^(-1/2)`, giving each
    /// cluster the same total weight.
    pub fn weight_by_cluster_size(&self) -> Self {
        let mut out = self.clone();
        for r in &self.ranges {
            let w = 1.0 / libm::sqrt(r.len() as f64);
            for i in r.clone() {
                out.y[i] *= w;
                for c in 0..self.k() {
                    out.x[(i, c)] *= w;
                }
            }
        }
        out
    }
}

/// One-hot dummies for a label column, dropping the first level.
pub fn fixed_effect_dummies<L: Ord + Clone + Display>(labels: &[L], prefix: &str) -> (DMatrix<f64>, Vec<String>) {
    let (ids, names) = dense_labels(labels);
    let levels = names.len().saturating_sub(1);
    let m = DMatrix::from_fn(labels.len(), levels, |i, c| if ids[i] == c + 1 { 1.0 } else { 0.0 });
    let cols = names.iter().skip(1).map(|n| format!("{prefix}_{n}")).collect();
    (m, cols)
}

/// Per-cluster cross-products `X_gᵀX_g`, `X_gᵀy_g` and their totals.
///
/// Totals are accumulated over clusters in index order, so `Σ_g xtx_g`
/// reproduces `xtx` bit for bit.
#[derive(Clone, Debug)]
pub struct ClusterBlocks {
    pub xtx_g: Vec<DMatrix<f64>>,
    pub xty_g: Vec<DVector<f64>>,
    pub ranges: Vec<Range<usize>>,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub n: usize,
}

impl ClusterBlocks {
    pub fn build(d: &ClusteredDataset) -> Self {
        Self::from_parts(d.x(), d.y(), d.ranges())
    }

    /// Blocks for arbitrary `X`, `y` over the given contiguous ranges.
    pub fn from_parts(x: &DMatrix<f64>, y: &DVector<f64>, ranges: &[Range<usize>]) -> Self {
        let k = x.ncols();
        let mut xtx_g = Vec::with_capacity(ranges.len());
        let mut xty_g = Vec::with_capacity(ranges.len());
        for r in ranges {
            let mut a = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for i in r.clone() {
                for c in 0..k {
                    let xic = x[(i, c)];
                    b[c] += xic * y[i];
                    for c2 in 0..=c {
                        a[(c, c2)] += xic * x[(i, c2)];
                    }
                }
            }
            for c in 0..k {
                for c2 in 0..c {
                    a[(c2, c)] = a[(c, c2)];
                }
            }
            xtx_g.push(a);
            xty_g.push(b);
        }
        let (xtx, xty) = sum_blocks(&xtx_g, &xty_g, k);
        Self { xtx_g, xty_g, ranges: ranges.to_vec(), xtx, xty, n: y.len() }
    }

    pub fn g(&self) -> usize {
        self.xtx_g.len()
    }
    pub fn k(&self) -> usize {
        self.xtx.ncols()
    }
}

/// `Σ_g` of the blocks in index order.
pub fn sum_blocks(xtx_g: &[DMatrix<f64>], xty_g: &[DVector<f64>], k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut xtx = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    for (a, b) in xtx_g.iter().zip(xty_g) {
        xtx += a;
        xty += b;
    }
    (xtx, xty)
}

/// Null hypothesis `β_coef = value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Restriction {
    pub coef: usize,
    pub value: f64,
}

impl Restriction {
    pub fn new(coef: usize, value: f64, k: usize) -> Result<Self> {
        if coef >= k {
            return Err(Error::BadCoefficient { index: coef, k });
        }
        Ok(Self { coef, value })
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::ds1;
    use super::*;

    #[test]
    fn labels_counted_in_first_appearance_order() {
        let labels = ["a", "a", "b", "b", "b", "c"];
        let x = DMatrix::from_element(6, 1, 1.0);
        let d = ClusteredDataset::new(alloc::vec![0.0; 6], x, alloc::vec!["c".into()], &labels, None).unwrap();
        assert_eq!(d.g(), 3);
        assert_eq!(d.cluster_sizes(), alloc::vec![2, 3, 1]);
        assert_eq!(d.cluster_names(), &["a", "b", "c"]);
    }

    #[test]
    fn rows_become_contiguous_and_stable() {
        let labels = ["b", "a", "b", "a"];
        let y = alloc::vec![0.0, 1.0, 2.0, 3.0];
        let x = DMatrix::from_element(4, 1, 1.0);
        let d = ClusteredDataset::new(y, x, alloc::vec!["c".into()], &labels, None).unwrap();
        assert_eq!(d.original_row(), &[0, 2, 1, 3]);
        assert_eq!(d.y().as_slice(), &[0.0, 2.0, 1.0, 3.0]);
        assert_eq!(d.cluster_ids(), &[0, 0, 1, 1]);
    }

    #[test]
    fn single_cluster_rejected() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let err = ClusteredDataset::new(alloc::vec![1.0, 2.0, 3.0], x, alloc::vec!["c".into()], &[7, 7, 7], None);
        assert_eq!(err.unwrap_err(), Error::TooFewClusters { found: 1 });
    }

    #[test]
    fn empty_and_missing_values_rejected() {
        let x = DMatrix::<f64>::zeros(0, 1);
        let e = ClusteredDataset::new::<u8>(alloc::vec![], x, alloc::vec!["c".into()], &[], None);
        assert_eq!(e.unwrap_err(), Error::EmptyDataset);
        let x = DMatrix::from_element(2, 1, 1.0);
        let e = ClusteredDataset::new(alloc::vec![1.0, f64::NAN], x, alloc::vec!["c".into()], &[0, 1], None);
        assert!(matches!(e.unwrap_err(), Error::InvalidArgument(_)));
    }

    #[test]
    fn ds1_blocks() {
        let b = ClusterBlocks::build(&ds1());
        assert_eq!(b.xtx, DMatrix::from_row_slice(2, 2, &[6.0, 21.0, 21.0, 91.0]));
        assert_eq!(b.xtx_g[0], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let (xtx, xty) = sum_blocks(&b.xtx_g, &b.xty_g, 2);
        assert_eq!(xtx, b.xtx);
        assert_eq!(xty, b.xty);
        assert_eq!(b.xty, DVector::from_vec(alloc::vec![13.0, 56.0]));
    }

    #[test]
    fn weighting_scales_rows() {
        let d = ds1();
        let w = d.weight_by_cluster_size();
        let b = ClusterBlocks::build(&d);
        let bw = ClusterBlocks::build(&w);
        // cluster 3 has three rows, so its cross-products shrink by 1/3
        let scaled = &b.xtx_g[2] / 3.0;
        assert!((&bw.xtx_g[2] - scaled).abs().max() < 1e-12);
        assert_eq!(bw.xtx_g[0], b.xtx_g[0]);

        let x = DMatrix::from_fn(8, 1, |i, _| i as f64 + 1.0);
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let d4 = ClusteredDataset::from_sizes(y, x, alloc::vec!["x".into()], &[4, 4]).unwrap();
        let w4 = d4.weight_by_cluster_size();
        assert_eq!(w4.x()[(1, 0)], 1.0);
        assert_eq!(w4.y()[3], 1.5);
    }

    #[test]
    fn singleton_weighting_is_identity() {
        let x = DMatrix::from_fn(4, 2, |i, c| (i * 3 + c) as f64);
        let y = alloc::vec![1.0, -2.0, 0.5, 4.0];
        let d = ClusteredDataset::from_sizes(y, x, alloc::vec!["a".into(), "b".into()], &[1, 1, 1, 1]).unwrap();
        let w = d.weight_by_cluster_size();
        assert_eq!(w.x(), d.x());
        assert_eq!(w.y(), d.y());
    }

    #[test]
    fn dummies_drop_first_level() {
        let (m, names) = fixed_effect_dummies(&["u", "v", "u", "w"], "fe");
        assert_eq!(names, alloc::vec!["fe_v".to_string(), "fe_w".to_string()]);
        assert_eq!(m.ncols(), 2);
        assert_eq!(m.column(0).as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.column(1).as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }
}
