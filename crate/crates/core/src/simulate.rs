//! Targeted Monte Carlo experiments on the actual design, and placebo
//! regression studies.
//!
//! Every replicate draws from its own stream keyed by `(seed, point,
//! replicate)`, so reports are identical for every executor.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bootstrap::{default_weights, run_bootstrap, BootstrapPlan, Variant, Weights};
use crate::crve::{cv1, cv2, cv3, t_test, VarianceEstimate};
use crate::design::{ClusterBlocks, ClusteredDataset, Restriction};
use crate::dist::normal_cdf;
use crate::estimator::{jackknife_estimates, ols_fit, ols_fit_factored, restricted_fit, JackknifeSet};
use crate::exec::{Executor, Sequential};
use crate::linalg::SpdFactor;
use crate::rng::{child_seed, stream, StreamRng};
use crate::{Error, Result};

const TAG_DISTURBANCE: u64 = 0x5245_4449;
const TAG_BOOT: u64 = 0x424f_4f54;
const TAG_PLACEBO: u64 = 0x504c_4143;

/// Largest assignment space that is sampled without replacement.
pub const MAX_DEDUP_SPACE: u128 = 1_000_000;
/// Fewest admissible placebo assignments.
pub const MIN_PLACEBO_ASSIGNMENTS: u128 = 100;

/// Source of simulated disturbances over contiguous clusters.
pub trait Disturbances: Sync {
    fn fill(&self, ranges: &[Range<usize>], rng: &mut StreamRng, out: &mut [f64]);
    /// Short label used in reports.
    fn label(&self) -> String;
}

/// `u_gi = v_g + ε_gi` with `var(v) = ρσ²` and `var(ε) = (1−ρ)σ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomEffects {
    pub rho: f64,
    pub sigma_total: f64,
}

impl RandomEffects {
    pub fn new(rho: f64, sigma_total: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(alloc::format!("rho must lie in [0, 1), got {rho}")));
        }
        if !(sigma_total > 0.0) {
            return Err(Error::InvalidArgument("sigma_total must be positive".into()));
        }
        Ok(Self { rho, sigma_total })
    }
}

impl Disturbances for RandomEffects {
    fn fill(&self, ranges: &[Range<usize>], rng: &mut StreamRng, out: &mut [f64]) {
        let sv = self.sigma_total * libm::sqrt(self.rho);
        let se = self.sigma_total * libm::sqrt(1.0 - self.rho);
        for r in ranges {
            let v: f64 = StandardNormal.sample(rng);
            for o in &mut out[r.clone()] {
                let e: f64 = StandardNormal.sample(rng);
                *o = sv * v + se * e;
            }
        }
    }

    fn label(&self) -> String {
        alloc::format!("rho={}", self.rho)
    }
}

fn ranges_from_sizes(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            start += s;
            start - s..start
        })
        .collect()
}

/// Random-effects disturbances for clusters of the given sizes.
pub fn generate_re_disturbances(sizes: &[usize], rho: f64, seed: u64, replicate: u64) -> Result<Vec<f64>> {
    let model = RandomEffects::new(rho, 1.0)?;
    let ranges = ranges_from_sizes(sizes);
    let mut out = vec![0.0; sizes.iter().sum()];
    model.fill(&ranges, &mut stream(seed, &[TAG_DISTURBANCE, 0, replicate]), &mut out);
    Ok(out)
}

/// `y = 0` when `Φ(u) ≥ fitted`, else 1.
pub fn binary_transform(u: &[f64], fitted: &[f64]) -> Vec<f64> {
    u.iter().zip(fitted).map(|(&u, &p)| if normal_cdf(u) >= p { 0.0 } else { 1.0 }).collect()
}

/// Pooled within-cluster correlation
/// `Σ_g [(Σ_i v_i)² − Σ_i v_i²] / Σ_g (N_g − 1) Σ_i v_i²`.
pub fn intra_cluster_correlation(v: &[f64], ranges: &[Range<usize>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in ranges {
        if r.len() < 2 {
            continue;
        }
        let s: f64 = v[r.clone()].iter().sum();
        let ss: f64 = v[r.clone()].iter().map(|x| x * x).sum();
        num += s * s - ss;
        den += (r.len() - 1) as f64 * ss;
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Any P-value producing test of one coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodSpec {
    Cv1,
    Cv2,
    Cv3,
    Hc1,
    Hc2,
    Hc3,
    Boot(Variant),
}

impl MethodSpec {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodSpec::Cv1 => "cv1",
            MethodSpec::Cv2 => "cv2",
            MethodSpec::Cv3 => "cv3",
            MethodSpec::Hc1 => "hc1",
            MethodSpec::Hc2 => "hc2",
            MethodSpec::Hc3 => "hc3",
            MethodSpec::Boot(v) => v.as_str(),
        }
    }

    fn is_hc(self) -> bool {
        matches!(self, MethodSpec::Hc1 | MethodSpec::Hc2 | MethodSpec::Hc3)
    }

    fn needs_jackknife(self) -> bool {
        matches!(self, MethodSpec::Cv3 | MethodSpec::Boot(Variant::WcuS))
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv1" => Ok(MethodSpec::Cv1),
            "cv2" => Ok(MethodSpec::Cv2),
            "cv3" => Ok(MethodSpec::Cv3),
            "hc1" => Ok(MethodSpec::Hc1),
            "hc2" => Ok(MethodSpec::Hc2),
            "hc3" => Ok(MethodSpec::Hc3),
            other => other.parse().map(MethodSpec::Boot),
        }
    }
}

/// Settings shared by every method run inside a replicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSettings {
    pub alpha: f64,
    pub boot_reps: usize,
    /// `None` picks the default for the number of clusters.
    pub weights: Option<Weights>,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self { alpha: 0.05, boot_reps: 399, weights: None }
    }
}

fn singleton_view(d: &ClusteredDataset) -> Result<ClusteredDataset> {
    ClusteredDataset::from_sizes(d.y().as_slice().to_vec(), d.x().clone(), d.column_names().to_vec(), &vec![1; d.n()])
}

fn variance_for(m: MethodSpec, d: &ClusteredDataset, b: &ClusterBlocks, f: &crate::estimator::FitResult, jk: Option<&JackknifeSet>) -> Result<VarianceEstimate> {
    match m {
        MethodSpec::Cv1 | MethodSpec::Hc1 => Ok(cv1(b, f)),
        MethodSpec::Cv2 | MethodSpec::Hc2 => Ok(cv2(d, f)),
        MethodSpec::Cv3 | MethodSpec::Hc3 => match jk {
            Some(jk) => cv3(jk, f),
            None => cv3(&jackknife_estimates(b)?, f),
        },
        MethodSpec::Boot(_) => unreachable!(),
    }
}

/// P values of `H0: β_j = beta0` for every method, on one dataset.
/// A failing method yields `None` without affecting the others.
pub fn method_pvalues(
    methods: &[MethodSpec],
    d: &ClusteredDataset,
    factor: Option<&SpdFactor>,
    j: usize,
    beta0: f64,
    settings: &MethodSettings,
    boot_seed: u64,
) -> Result<(Vec<Option<f64>>, DVector<f64>)> {
    let b = ClusterBlocks::build(d);
    let f = match factor {
        Some(fac) => ols_fit_factored(d, &b, fac.clone()),
        None => ols_fit(d, &b)?,
    };
    let jk = if methods.iter().any(|m| m.needs_jackknife() && !m.is_hc()) { jackknife_estimates(&b).ok() } else { None };
    let hc = if methods.iter().any(|m| m.is_hc()) {
        let v = singleton_view(d)?;
        let hb = ClusterBlocks::build(&v);
        let hf = ols_fit_factored(&v, &hb, f.factor.clone());
        Some((v, hb, hf))
    } else {
        None
    };
    let weights = settings.weights.unwrap_or_else(|| default_weights(d.g()));
    let p = methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let r = match m {
                MethodSpec::Boot(variant) => {
                    let plan = BootstrapPlan::new(variant, settings.boot_reps, weights, child_seed(boot_seed, &[mi as u64]));
                    run_bootstrap(&plan, d, &b, &f, jk.as_ref(), j, beta0, None, &Sequential).map(|o| o.p_sym)
                }
                m if m.is_hc() => {
                    let (v, hb, hf) = hc.as_ref().expect("singleton view built");
                    variance_for(m, v, hb, hf, None)
                        .and_then(|ve| t_test(&ve.with_dof((v.n() - 1) as f64), hf, j, beta0, settings.alpha))
                        .map(|t| t.p_value)
                }
                m => variance_for(m, d, &b, &f, jk.as_ref())
                    .and_then(|ve| t_test(&ve, &f, j, beta0, settings.alpha))
                    .map(|t| t.p_value),
            };
            r.ok().filter(|p| p.is_finite())
        })
        .collect();
    Ok((p, f.residuals))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Reliable,
    Over,
    Under,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Reliable => "reliable",
            Verdict::Over => "over",
            Verdict::Under => "under",
        }
    }

    pub fn classify(freq: f64, band: (f64, f64)) -> Self {
        if freq < band.0 {
            Verdict::Under
        } else if freq > band.1 {
            Verdict::Over
        } else {
            Verdict::Reliable
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodCell {
    pub method: String,
    pub rejections: usize,
    pub failures: usize,
    /// Rejections over successful replicates.
    pub frequency: f64,
    /// `(p̂(1−p̂)/R)^{1/2}` with R the successful replicates.
    pub mc_se: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignPointReport {
    pub label: String,
    pub rho: Option<f64>,
    pub replications: usize,
    /// Mean within-cluster correlation of the fitted residuals.
    pub realized_correlation: f64,
    /// Mean outcome, for binary designs.
    pub mean_outcome: Option<f64>,
    pub cells: Vec<MethodCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub alpha: f64,
    pub band: (f64, f64),
    pub seed: u64,
    pub points: Vec<DesignPointReport>,
    pub warnings: Vec<String>,
}

/// Default reliability band `[0.9α, 1.1α]`.
pub fn default_band(alpha: f64) -> (f64, f64) {
    (0.9 * alpha, 1.1 * alpha)
}

struct ReplicateOutcome {
    pvalues: Vec<Option<f64>>,
    corr: f64,
    mean_y: f64,
}

fn tally(
    label: String,
    rho: Option<f64>,
    methods: &[MethodSpec],
    outcomes: &[Option<ReplicateOutcome>],
    alpha: f64,
    band: (f64, f64),
    binary: bool,
) -> DesignPointReport {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().flatten().collect();
    let cells = methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let mut rejections = 0;
            let mut failures = outcomes.len() - ok.len();
            for o in &ok {
                match o.pvalues[mi] {
                    Some(p) if p < alpha => rejections += 1,
                    Some(_) => {}
                    None => failures += 1,
                }
            }
            let used = outcomes.len() - failures;
            let frequency = if used > 0 { rejections as f64 / used as f64 } else { f64::NAN };
            let mc_se = if used > 0 { libm::sqrt(frequency * (1.0 - frequency) / used as f64) } else { f64::NAN };
            MethodCell {
                method: m.as_str().into(),
                rejections,
                failures,
                frequency,
                mc_se,
                verdict: Verdict::classify(frequency, band),
            }
        })
        .collect();
    let mean = |g: &dyn Fn(&ReplicateOutcome) -> f64| {
        let v: Vec<f64> = ok.iter().map(|o| g(o)).filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    DesignPointReport {
        label,
        rho,
        replications: outcomes.len(),
        realized_correlation: mean(&|o| o.corr),
        mean_outcome: binary.then(|| mean(&|o| o.mean_y)),
        cells,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeMode {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McDesign {
    pub rho: Vec<f64>,
    pub sigma_total: f64,
    pub replications: usize,
    /// Coefficients of the DGP; `None` means zero. Ignored for binary outcomes.
    pub beta0: Option<DVector<f64>>,
    pub outcome: OutcomeMode,
    pub methods: Vec<MethodSpec>,
    /// Coefficient under test.
    pub coef: usize,
    pub settings: MethodSettings,
    pub band: Option<(f64, f64)>,
    pub seed: u64,
}

impl McDesign {
    pub fn new(coef: usize, methods: Vec<MethodSpec>, rho: Vec<f64>, replications: usize, seed: u64) -> Self {
        Self {
            rho,
            sigma_total: 1.0,
            replications,
            beta0: None,
            outcome: OutcomeMode::Continuous,
            methods,
            coef,
            settings: MethodSettings::default(),
            band: None,
            seed,
        }
    }

    fn validate(&self, d: &ClusteredDataset) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("at least one replication is needed".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods requested".into()));
        }
        if self.coef >= d.k() {
            return Err(Error::BadCoefficient { index: self.coef, k: d.k() });
        }
        if let Some(b) = &self.beta0 {
            if b.len() != d.k() {
                return Err(Error::Dimension(alloc::format!("beta0 has {} entries, X has {} columns", b.len(), d.k())));
            }
        }
        for &r in &self.rho {
            RandomEffects::new(r, self.sigma_total)?;
        }
        Ok(())
    }
}

/// Runs every design point of `design` with random-effects disturbances.
pub fn run_monte_carlo<E: Executor>(d: &ClusteredDataset, design: &McDesign, exec: &E) -> Result<SimReport> {
    design.validate(d)?;
    let models: Vec<RandomEffects> =
        design.rho.iter().map(|&r| RandomEffects::new(r, design.sigma_total)).collect::<Result<_>>()?;
    run_monte_carlo_with(d, design, &models, exec)
}

/// Same as [`run_monte_carlo`] with caller-supplied disturbance models,
/// one design point each.
pub fn run_monte_carlo_with<E: Executor, D: Disturbances>(
    d: &ClusteredDataset,
    design: &McDesign,
    models: &[D],
    exec: &E,
) -> Result<SimReport> {
    design.validate(d)?;
    let j = design.coef;
    let b = ClusterBlocks::build(d);
    let factor = SpdFactor::new(&b.xtx)?;
    let (mean_part, beta0_j) = match design.outcome {
        OutcomeMode::Continuous => {
            let beta = design.beta0.clone().unwrap_or_else(|| DVector::zeros(d.k()));
            let bj = beta[j];
            (d.x() * beta, bj)
        }
        OutcomeMode::Binary => {
            let rf = restricted_fit(d, &b, Restriction::new(j, 0.0, d.k())?)?;
            (d.x() * rf.beta, 0.0)
        }
    };
    let alpha = design.settings.alpha;
    let band = design.band.unwrap_or_else(|| default_band(alpha));
    let mut warnings = Vec::new();
    if design.outcome == OutcomeMode::Binary {
        let outside = mean_part.iter().filter(|p| !(0.0..=1.0).contains(*p)).count();
        if outside > 0 {
            warnings.push(alloc::format!("{outside} fitted probabilities lie outside [0, 1]"));
        }
    }

    let mut points = Vec::with_capacity(models.len());
    for (pi, model) in models.iter().enumerate() {
        let outcomes = exec.map(design.replications, |r| {
            let keys = [TAG_DISTURBANCE, pi as u64, r as u64];
            let mut u = vec![0.0; d.n()];
            model.fill(d.ranges(), &mut stream(design.seed, &keys), &mut u);
            let y: Vec<f64> = match design.outcome {
                OutcomeMode::Continuous => mean_part.iter().zip(&u).map(|(m, e)| m + e).collect(),
                OutcomeMode::Binary => {
                    let z: Vec<f64> = u.iter().map(|e| e / design.sigma_total).collect();
                    binary_transform(&z, mean_part.as_slice())
                }
            };
            let mean_y = y.iter().sum::<f64>() / y.len() as f64;
            let dr = d.with_y(DVector::from_vec(y));
            let boot_seed = child_seed(design.seed, &[TAG_BOOT, pi as u64, r as u64]);
            method_pvalues(&design.methods, &dr, Some(&factor), j, beta0_j, &design.settings, boot_seed)
                .ok()
                .map(|(pvalues, resid)| ReplicateOutcome {
                    pvalues,
                    corr: intra_cluster_correlation(resid.as_slice(), d.ranges()),
                    mean_y,
                })
        });
        let rho = design.rho.get(pi).copied();
        points.push(tally(
            model.label(),
            rho,
            &design.methods,
            &outcomes,
            alpha,
            band,
            design.outcome == OutcomeMode::Binary,
        ));
    }
    Ok(SimReport { alpha, band, seed: design.seed, points, warnings })
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic rank of a sorted `k`-subset of `0..n`.
pub fn rank_combination(n: usize, subset: &[usize]) -> u128 {
    let k = subset.len();
    let mut rank = 0;
    let mut prev = 0;
    for (i, &c) in subset.iter().enumerate() {
        for skipped in prev..c {
            rank += binomial(n - skipped - 1, k - i - 1);
        }
        prev = c + 1;
    }
    rank
}

/// Inverse of [`rank_combination`].
pub fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut c = 0;
    for i in 0..k {
        loop {
            let block = binomial(n - c - 1, k - i - 1);
            if rank < block {
                break;
            }
            rank -= block;
            c += 1;
        }
        out.push(c);
        c += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlaceboStrategy {
    /// Exactly `treated` randomly chosen clusters are fully treated.
    ClusterLevel { treated: usize },
    /// Clusters keep their treated counts; treated observations are drawn
    /// within each cluster.
    WithinCluster { counts: Vec<usize> },
    /// Every cluster-level assignment with `treated` clusters, in
    /// lexicographic order.
    EnumerateAll { treated: usize },
}

impl PlaceboStrategy {
    /// Per-cluster treated counts of the treatment column `t`.
    pub fn within_from_column(d: &ClusteredDataset, t: usize) -> Self {
        let col = d.x().column(t);
        let counts = d.ranges().iter().map(|r| (r.start..r.end).filter(|&i| col[i] != 0.0).count()).collect();
        PlaceboStrategy::WithinCluster { counts }
    }

    /// Number of clusters with any treated observation in column `t`.
    pub fn cluster_level_from_column(d: &ClusteredDataset, t: usize) -> Self {
        let col = d.x().column(t);
        let treated = d.ranges().iter().filter(|r| (r.start..r.end).any(|i| col[i] != 0.0)).count();
        PlaceboStrategy::ClusterLevel { treated }
    }
}

/// Draws placebo regressors for one dataset and strategy.
#[derive(Clone, Debug)]
pub struct PlaceboGenerator {
    strategy: PlaceboStrategy,
    ranges: Vec<Range<usize>>,
    n: usize,
    space: u128,
    /// Rank of the actual treatment column, when it lies in the space.
    actual_rank: Option<u128>,
    actual: Option<DVector<f64>>,
    /// Admissible ranks, in visiting order, when the space is small.
    order: Option<Vec<u128>>,
    seed: u64,
}

impl PlaceboGenerator {
    /// `actual` is the real treatment column; its assignment is never
    /// drawn. Refuses spaces with fewer than 100 admissible assignments.
    pub fn new(d: &ClusteredDataset, strategy: PlaceboStrategy, actual: Option<usize>, seed: u64) -> Result<Self> {
        let g = d.g();
        let ranges = d.ranges().to_vec();
        let space = match &strategy {
            PlaceboStrategy::ClusterLevel { treated } | PlaceboStrategy::EnumerateAll { treated } => {
                if *treated == 0 || *treated >= g {
                    return Err(Error::DegenerateTreatment("placebo needs treated and control clusters"));
                }
                binomial(g, *treated)
            }
            PlaceboStrategy::WithinCluster { counts } => {
                if counts.len() != g {
                    return Err(Error::Dimension(alloc::format!("{} treated counts for {g} clusters", counts.len())));
                }
                let mut s: u128 = 1;
                for (c, r) in counts.iter().zip(&ranges) {
                    if *c > r.len() {
                        return Err(Error::InvalidArgument("treated count exceeds cluster size".into()));
                    }
                    s = s.saturating_mul(binomial(r.len(), *c));
                }
                s
            }
        };
        if let PlaceboStrategy::EnumerateAll { .. } = strategy {
            if space > MAX_DEDUP_SPACE {
                return Err(Error::InvalidArgument(alloc::format!(
                    "enumeration needs at most {MAX_DEDUP_SPACE} assignments, this design has {space}"
                )));
            }
        }
        let actual_col = match actual {
            Some(t) if t < d.k() => Some(d.x().column(t).into_owned()),
            Some(t) => return Err(Error::BadCoefficient { index: t, k: d.k() }),
            None => None,
        };
        let mut gen = Self { strategy, ranges, n: d.n(), space, actual_rank: None, actual: actual_col, order: None, seed };
        gen.actual_rank = gen.actual.as_ref().and_then(|a| gen.rank_of(a));
        let available = gen.available();
        if available < MIN_PLACEBO_ASSIGNMENTS {
            return Err(Error::TooFewAssignments { available });
        }
        if space <= MAX_DEDUP_SPACE {
            let mut order: Vec<u128> = (0..space).filter(|&r| Some(r) != gen.actual_rank).collect();
            if !matches!(gen.strategy, PlaceboStrategy::EnumerateAll { .. }) {
                let mut rng = stream(seed, &[TAG_PLACEBO, u64::MAX]);
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
            }
            gen.order = Some(order);
        }
        Ok(gen)
    }

    /// Size of the assignment space, including the actual assignment.
    pub fn space(&self) -> u128 {
        self.space
    }

    /// Assignments that may be drawn.
    pub fn available(&self) -> u128 {
        self.space - u128::from(self.actual_rank.is_some())
    }

    pub fn without_replacement(&self) -> bool {
        self.order.is_some()
    }

    /// Replicates actually run when `requested` are asked for.
    pub fn replications(&self, requested: usize) -> usize {
        match (&self.strategy, &self.order) {
            (PlaceboStrategy::EnumerateAll { .. }, Some(o)) => o.len(),
            (_, Some(o)) => requested.min(o.len()),
            _ => requested,
        }
    }

    fn rank_of(&self, col: &DVector<f64>) -> Option<u128> {
        if col.iter().any(|&v| v != 0.0 && v != 1.0) {
            return None;
        }
        let rank = match &self.strategy {
            PlaceboStrategy::ClusterLevel { treated } | PlaceboStrategy::EnumerateAll { treated } => {
                let mut set = Vec::new();
                for (g, r) in self.ranges.iter().enumerate() {
                    let s: f64 = col.rows(r.start, r.len()).sum();
                    if s == r.len() as f64 {
                        set.push(g);
                    } else if s != 0.0 {
                        return None;
                    }
                }
                if set.len() != *treated {
                    return None;
                }
                rank_combination(self.ranges.len(), &set)
            }
            PlaceboStrategy::WithinCluster { counts } => {
                let mut rank: u128 = 0;
                for (c, r) in counts.iter().zip(&self.ranges) {
                    let set: Vec<usize> = (0..r.len()).filter(|&i| col[r.start + i] != 0.0).collect();
                    if set.len() != *c {
                        return None;
                    }
                    rank = rank * binomial(r.len(), *c) + rank_combination(r.len(), &set);
                }
                rank
            }
        };
        Some(rank)
    }

    fn column_of_rank(&self, mut rank: u128) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        match &self.strategy {
            PlaceboStrategy::ClusterLevel { treated } | PlaceboStrategy::EnumerateAll { treated } => {
                for g in unrank_combination(self.ranges.len(), *treated, rank) {
                    z.rows_mut(self.ranges[g].start, self.ranges[g].len()).fill(1.0);
                }
            }
            PlaceboStrategy::WithinCluster { counts } => {
                for (c, r) in counts.iter().zip(&self.ranges).rev() {
                    let radix = binomial(r.len(), *c);
                    for i in unrank_combination(r.len(), *c, rank % radix) {
                        z[r.start + i] = 1.0;
                    }
                    rank /= radix;
                }
            }
        }
        z
    }

    fn sample(&self, rng: &mut StreamRng) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        match &self.strategy {
            PlaceboStrategy::ClusterLevel { treated } | PlaceboStrategy::EnumerateAll { treated } => {
                for g in rand::seq::index::sample(rng, self.ranges.len(), *treated) {
                    z.rows_mut(self.ranges[g].start, self.ranges[g].len()).fill(1.0);
                }
            }
            PlaceboStrategy::WithinCluster { counts } => {
                for (c, r) in counts.iter().zip(&self.ranges) {
                    for i in rand::seq::index::sample(rng, r.len(), *c) {
                        z[r.start + i] = 1.0;
                    }
                }
            }
        }
        z
    }

    /// Placebo column for replicate `r`, in the dataset's row order.
    pub fn draw(&self, r: usize) -> DVector<f64> {
        if let Some(order) = &self.order {
            return self.column_of_rank(order[r % order.len()]);
        }
        let mut rng = stream(self.seed, &[TAG_PLACEBO, r as u64]);
        loop {
            let z = self.sample(&mut rng);
            if self.actual.as_ref() != Some(&z) {
                return z;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaceboMode {
    /// The placebo joins the full regressor set.
    Add,
    /// The placebo takes the place of the treatment column.
    Replace,
}

impl PlaceboMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaceboMode::Add => "add",
            PlaceboMode::Replace => "replace",
        }
    }
}

impl FromStr for PlaceboMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "add" | "a" => Ok(PlaceboMode::Add),
            "replace" | "r" => Ok(PlaceboMode::Replace),
            other => Err(Error::InvalidArgument(alloc::format!("unknown placebo mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaceboDesign {
    pub strategy: PlaceboStrategy,
    pub modes: Vec<PlaceboMode>,
    pub replications: usize,
    pub methods: Vec<MethodSpec>,
    /// Actual treatment column; required for `Replace`.
    pub treatment: Option<usize>,
    pub settings: MethodSettings,
    pub band: Option<(f64, f64)>,
    pub seed: u64,
}

/// Placebo column for replicate `r` of `design`.
pub fn generate_placebo(d: &ClusteredDataset, design: &PlaceboDesign, replicate: usize) -> Result<DVector<f64>> {
    let gen = PlaceboGenerator::new(d, design.strategy.clone(), design.treatment, design.seed)?;
    Ok(gen.draw(replicate))
}

fn placebo_dataset(d: &ClusteredDataset, z: &DVector<f64>, mode: PlaceboMode, t: Option<usize>) -> Result<(ClusteredDataset, usize)> {
    let (n, k) = (d.n(), d.k());
    match mode {
        PlaceboMode::Add => {
            let x = DMatrix::from_fn(n, k + 1, |i, c| if c < k { d.x()[(i, c)] } else { z[i] });
            let mut names = d.column_names().to_vec();
            names.push("placebo".into());
            Ok((d.with_x(x, names)?, k))
        }
        PlaceboMode::Replace => {
            let t = t.ok_or_else(|| Error::InvalidArgument("replace mode needs the treatment column".into()))?;
            let mut x = d.x().clone();
            x.set_column(t, z);
            Ok((d.with_x(x, d.column_names().to_vec())?, t))
        }
    }
}

/// Rejection frequencies of `H0: coefficient on z = 0` over placebo draws,
/// one design point per mode.
pub fn run_placebo_study<E: Executor>(d: &ClusteredDataset, design: &PlaceboDesign, exec: &E) -> Result<SimReport> {
    if design.methods.is_empty() || design.modes.is_empty() {
        return Err(Error::InvalidArgument("placebo study needs methods and modes".into()));
    }
    if design.modes.contains(&PlaceboMode::Replace) && design.treatment.is_none() {
        return Err(Error::InvalidArgument("replace mode needs the treatment column".into()));
    }
    let gen = PlaceboGenerator::new(d, design.strategy.clone(), design.treatment, design.seed)?;
    let reps = gen.replications(design.replications);
    let alpha = design.settings.alpha;
    let band = design.band.unwrap_or_else(|| default_band(alpha));
    let mut warnings = Vec::new();
    if reps < design.replications {
        warnings.push(alloc::format!("only {reps} distinct placebo assignments; replications capped"));
    }
    let mut points = Vec::new();
    for (mi, &mode) in design.modes.iter().enumerate() {
        let outcomes = exec.map(reps, |r| {
            let z = gen.draw(r);
            let (dz, j) = placebo_dataset(d, &z, mode, design.treatment).ok()?;
            let boot_seed = child_seed(design.seed, &[TAG_BOOT, mi as u64, r as u64]);
            method_pvalues(&design.methods, &dz, None, j, 0.0, &design.settings, boot_seed).ok().map(|(pvalues, resid)| {
                ReplicateOutcome { pvalues, corr: intra_cluster_correlation(resid.as_slice(), d.ranges()), mean_y: f64::NAN }
            })
        });
        points.push(tally(alloc::format!("placebo-{}", mode.as_str()), None, &design.methods, &outcomes, alpha, band, false));
    }
    Ok(SimReport { alpha, band, seed: design.seed, points, warnings })
}
