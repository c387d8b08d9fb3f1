//! Pairs cluster bootstrap and the WCU-C / WCU-S / WCR-C / WCR-S wild
//! cluster bootstraps.
//!
//! Wild replicates are formulated on cluster scores. For coefficient j,
//! with `a = (XᵀX)⁻¹e_j`, each replicate needs only
//! `δ* = Σ_g v_g (XᵀX)⁻¹ s_g` and the recentred scores
//! `ŝ*_g = v_g s_g − X_gᵀX_g δ*`, so one replicate costs O(Gk) once the
//! per-cluster projections are cached.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::crve::{cv1_scalar, cv1_var_j};
use crate::design::{ClusterBlocks, ClusteredDataset, Restriction};
use crate::dist::student_t_quantile;
use crate::estimator::{
    acute_scores, dotted_scores, jackknife_estimates, restricted_factor, restricted_fit_factored, FitResult,
    JackknifeSet,
};
use crate::exec::Executor;
use crate::linalg::SpdFactor;
use crate::rng::stream;
use crate::{Error, Result};

/// Largest G for which full Rademacher enumeration is allowed.
pub const MAX_ENUMERATION_G: usize = 30;
/// Pairs bootstrap refuses when more than this share of replicates is degenerate.
pub const MAX_DEGENERATE_SHARE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Pairs,
    WcuC,
    WcuS,
    WcrC,
    WcrS,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pairs => "pairs",
            Variant::WcuC => "wcu-c",
            Variant::WcuS => "wcu-s",
            Variant::WcrC => "wcr-c",
            Variant::WcrS => "wcr-s",
        }
    }
    pub fn is_wild(self) -> bool {
        self != Variant::Pairs
    }
    pub fn is_restricted(self) -> bool {
        matches!(self, Variant::WcrC | Variant::WcrS)
    }
    pub fn uses_modified_scores(self) -> bool {
        matches!(self, Variant::WcuS | Variant::WcrS)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pairs" | "pcb" => Ok(Variant::Pairs),
            "wcu-c" | "wcu" => Ok(Variant::WcuC),
            "wcu-s" => Ok(Variant::WcuS),
            "wcr-c" | "wcr" => Ok(Variant::WcrC),
            "wcr-s" => Ok(Variant::WcrS),
            other => Err(Error::InvalidArgument(alloc::format!("unknown bootstrap variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weights {
    Rademacher,
    Webb6,
}

impl Weights {
    pub fn as_str(self) -> &'static str {
        match self {
            Weights::Rademacher => "rademacher",
            Weights::Webb6 => "webb6",
        }
    }
}

impl FromStr for Weights {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(Weights::Rademacher),
            "webb" | "webb6" => Ok(Weights::Webb6),
            other => Err(Error::InvalidArgument(alloc::format!("unknown weight distribution '{other}'"))),
        }
    }
}

/// Rademacher unless there are fewer than 10 clusters.
pub fn default_weights(g: usize) -> Weights {
    if g >= 10 {
        Weights::Rademacher
    } else {
        Weights::Webb6
    }
}

pub const WEBB6_POINTS: [f64; 6] = [
    -1.224_744_871_391_589,
    -1.0,
    -core::f64::consts::FRAC_1_SQRT_2,
    core::f64::consts::FRAC_1_SQRT_2,
    1.0,
    1.224_744_871_391_589,
];

/// Auxiliary weights for replicate `replicate`: a deterministic function of
/// `(seed, replicate, g)`.
pub fn draw_weights(dist: Weights, g: usize, replicate: u64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0x5749_4c44, replicate]);
    match dist {
        Weights::Rademacher => {
            let mut out = Vec::with_capacity(g);
            let mut word = 0u64;
            for i in 0..g {
                if i % 64 == 0 {
                    word = rng.next_u64();
                }
                out.push(if (word >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 });
            }
            out
        }
        Weights::Webb6 => (0..g).map(|_| WEBB6_POINTS[rng.random_range(0..6usize)]).collect(),
    }
}

/// The `index`-th of the `2^G` Rademacher vectors; index 0 is all-plus.
pub fn enumerated_weights(g: usize, index: u64) -> Vec<f64> {
    (0..g).map(|i| if (index >> i) & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapPlan {
    pub variant: Variant,
    pub replications: usize,
    pub weights: Weights,
    pub seed: u64,
    pub enumerate: bool,
}

impl BootstrapPlan {
    pub fn new(variant: Variant, replications: usize, weights: Weights, seed: u64) -> Self {
        Self { variant, replications, weights, seed, enumerate: false }
    }

    pub fn enumerated(variant: Variant, seed: u64) -> Self {
        Self { variant, replications: 0, weights: Weights::Rademacher, seed, enumerate: true }
    }

    pub fn validate(&self, g: usize) -> Result<()> {
        if self.enumerate {
            if !self.variant.is_wild() || self.weights != Weights::Rademacher || g > MAX_ENUMERATION_G {
                return Err(Error::InvalidArgument(alloc::format!(
                    "enumeration needs a wild variant, Rademacher weights and G <= {MAX_ENUMERATION_G}"
                )));
            }
        } else if self.replications == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }

    /// Replicate count actually run.
    pub fn effective_replications(&self, g: usize) -> usize {
        if self.enumerate {
            1usize << g
        } else {
            self.replications
        }
    }

    fn weights_for(&self, g: usize, r: usize) -> Vec<f64> {
        if self.enumerate {
            enumerated_weights(g, r as u64)
        } else {
            draw_weights(self.weights, g, r as u64, self.seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapOutcome {
    pub variant: Variant,
    pub t_obs: f64,
    pub t_star: Vec<f64>,
    pub p_sym: f64,
    pub p_equal_tail: f64,
    /// Standard deviation of the bootstrap coefficient draws (pairs only).
    pub boot_se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub ci_method: Option<&'static str>,
    pub replicates_used: usize,
    pub dropped: usize,
}

/// `(1/B) #{|t*| > |t|}`; ties count as non-rejections.
pub fn symmetric_pvalue(t_obs: f64, t_star: &[f64]) -> f64 {
    if t_star.is_empty() {
        return f64::NAN;
    }
    let a = t_obs.abs();
    t_star.iter().filter(|t| t.abs() > a).count() as f64 / t_star.len() as f64
}

/// `2 min(#{t* ≤ t}, #{t* ≥ t}) / B`, capped at 1.
pub fn equal_tail_pvalue(t_obs: f64, t_star: &[f64]) -> f64 {
    if t_star.is_empty() {
        return f64::NAN;
    }
    let below = t_star.iter().filter(|&&t| t <= t_obs).count();
    let above = t_star.iter().filter(|&&t| t >= t_obs).count();
    (2.0 * below.min(above) as f64 / t_star.len() as f64).min(1.0)
}

fn snap(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// 1-based order statistics `((B+1)α/2, (B+1)(1−α/2))` used for the
/// bootstrap critical values; B = 999, α = 0.05 gives (25, 975).
pub fn quantile_indices(b: usize, alpha: f64) -> (usize, usize) {
    let bf = (b + 1) as f64;
    let lo = libm::floor(snap(bf * alpha / 2.0)) as usize;
    let hi = libm::ceil(snap(bf * (1.0 - alpha / 2.0))) as usize;
    (lo.clamp(1, b.max(1)), hi.clamp(1, b.max(1)))
}

/// `[β̂_j − se·c*_{1−α/2}, β̂_j − se·c*_{α/2}]`.
pub fn studentized_ci(coef: f64, se: f64, t_star: &[f64], alpha: f64) -> (f64, f64) {
    let mut sorted = t_star.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = quantile_indices(sorted.len(), alpha);
    (coef - se * sorted[hi - 1], coef - se * sorted[lo - 1])
}

/// Cached per-cluster projections for wild replicates on coefficient j.
#[derive(Clone, Debug)]
pub struct WildEngine {
    /// `a · s_g`
    proj: Vec<f64>,
    /// `(XᵀX)⁻¹ s_g`
    delta_parts: Vec<DVector<f64>>,
    /// `X_gᵀX_g a`
    lever: Vec<DVector<f64>>,
    scale: f64,
}

impl WildEngine {
    pub fn new(b: &ClusterBlocks, xtx_inv: &DMatrix<f64>, scores: &[DVector<f64>], j: usize) -> Self {
        let a: DVector<f64> = xtx_inv.column(j).into_owned();
        let proj = scores.iter().map(|s| a.dot(s)).collect();
        let delta_parts = scores.iter().map(|s| xtx_inv * s).collect();
        let lever = b.xtx_g.iter().map(|m| m * &a).collect();
        Self { proj, delta_parts, lever, scale: cv1_scalar(b.g(), b.n, b.k()) }
    }

    /// Bootstrap t statistic for one weight vector, `None` when its CV1
    /// variance is not positive.
    pub fn t_star(&self, v: &[f64]) -> Option<f64> {
        let k = self.delta_parts[0].len();
        let mut delta = DVector::zeros(k);
        let mut num = 0.0;
        for ((vg, d), p) in v.iter().zip(&self.delta_parts).zip(&self.proj) {
            delta.axpy(*vg, d, 1.0);
            num += vg * p;
        }
        let mut ss = 0.0;
        for ((vg, p), w) in v.iter().zip(&self.proj).zip(&self.lever) {
            let e = vg * p - w.dot(&delta);
            ss += e * e;
        }
        let var = self.scale * ss;
        if var > 0.0 && var.is_finite() {
            Some(num / libm::sqrt(var))
        } else {
            None
        }
    }
}

/// CV1 t statistic of the actual data for `β_j = β0j`.
pub fn t_obs_cv1(b: &ClusterBlocks, f: &FitResult, j: usize, beta0: f64) -> Result<f64> {
    let var = cv1_var_j(&f.xtx_inv, &f.scores, j, cv1_scalar(b.g(), b.n, b.k()));
    if !(var > 0.0) {
        return Err(Error::ZeroVariance { index: j });
    }
    Ok((f.beta[j] - beta0) / libm::sqrt(var))
}

/// Scores that drive the bootstrap DGP of a wild variant.
pub fn dgp_scores(
    variant: Variant,
    d: &ClusteredDataset,
    b: &ClusterBlocks,
    f: &FitResult,
    jk: Option<&JackknifeSet>,
    restriction: Restriction,
) -> Result<Vec<DVector<f64>>> {
    match variant {
        Variant::WcuC => Ok(f.scores.clone()),
        Variant::WcuS => match jk {
            Some(jk) => acute_scores(b, f, jk),
            None => acute_scores(b, f, &jackknife_estimates(b)?),
        },
        Variant::WcrC | Variant::WcrS => {
            let factor = restricted_factor(b, restriction.coef)?;
            let rf = restricted_fit_factored(d, b, restriction, factor)?;
            if variant == Variant::WcrC {
                Ok(rf.scores)
            } else {
                dotted_scores(b, &rf)
            }
        }
        Variant::Pairs => Err(Error::InvalidArgument("pairs bootstrap has no score DGP".into())),
    }
}

fn wild_t_stars<E: Executor>(plan: &BootstrapPlan, engine: &WildEngine, g: usize, exec: &E) -> (Vec<f64>, usize) {
    let reps = plan.effective_replications(g);
    let raw = exec.map(reps, |r| engine.t_star(&plan.weights_for(g, r)));
    let dropped = raw.iter().filter(|t| t.is_none()).count();
    (raw.into_iter().flatten().collect(), dropped)
}

/// Wild cluster bootstrap test of `β_j = β0j` given precomputed DGP scores.
pub fn wild_bootstrap<E: Executor>(
    plan: &BootstrapPlan,
    b: &ClusterBlocks,
    f: &FitResult,
    scores: &[DVector<f64>],
    j: usize,
    beta0: f64,
    exec: &E,
) -> Result<BootstrapOutcome> {
    plan.validate(b.g())?;
    if !plan.variant.is_wild() {
        return Err(Error::InvalidArgument("wild_bootstrap called with the pairs variant".into()));
    }
    let t_obs = t_obs_cv1(b, f, j, beta0)?;
    let engine = WildEngine::new(b, &f.xtx_inv, scores, j);
    let (t_star, dropped) = wild_t_stars(plan, &engine, b.g(), exec);
    if t_star.is_empty() {
        return Err(Error::TooManyDegenerate { dropped, total: dropped });
    }
    Ok(BootstrapOutcome {
        variant: plan.variant,
        t_obs,
        p_sym: symmetric_pvalue(t_obs, &t_star),
        p_equal_tail: equal_tail_pvalue(t_obs, &t_star),
        replicates_used: t_star.len(),
        t_star,
        boot_se: None,
        ci: None,
        ci_method: None,
        dropped,
    })
}

/// Pairs cluster bootstrap on resampled blocks.
pub fn pairs_bootstrap<E: Executor>(
    plan: &BootstrapPlan,
    b: &ClusterBlocks,
    f: &FitResult,
    j: usize,
    beta0: f64,
    exec: &E,
) -> Result<BootstrapOutcome> {
    plan.validate(b.g())?;
    let g = b.g();
    let k = b.k();
    let t_obs = t_obs_cv1(b, f, j, beta0)?;
    let beta_j = f.beta[j];
    let raw = exec.map(plan.replications, |r| {
        let mut rng = stream(plan.seed, &[0x5041_4952, r as u64]);
        let picks: Vec<usize> = (0..g).map(|_| rng.random_range(0..g)).collect();
        let mut xtx = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        let mut n_star = 0;
        for &p in &picks {
            xtx += &b.xtx_g[p];
            xty += &b.xty_g[p];
            n_star += b.ranges[p].len();
        }
        if n_star <= k {
            return None;
        }
        let factor = SpdFactor::new(&xtx).ok()?;
        let beta = factor.solve(&xty);
        let inv = factor.inverse();
        let scores: Vec<DVector<f64>> = picks.iter().map(|&p| &b.xty_g[p] - &b.xtx_g[p] * &beta).collect();
        let var = cv1_var_j(&inv, &scores, j, cv1_scalar(g, n_star, k));
        if !(var > 0.0) || !var.is_finite() {
            return None;
        }
        Some(((beta[j] - beta_j) / libm::sqrt(var), beta[j]))
    });
    let total = raw.len();
    let kept: Vec<(f64, f64)> = raw.into_iter().flatten().collect();
    let dropped = total - kept.len();
    if kept.is_empty() || dropped as f64 > MAX_DEGENERATE_SHARE * total as f64 {
        return Err(Error::TooManyDegenerate { dropped, total });
    }
    let t_star: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let mean = kept.iter().map(|p| p.1).sum::<f64>() / kept.len() as f64;
    let boot_se = if kept.len() > 1 {
        libm::sqrt(kept.iter().map(|p| { let e = p.1 - mean; e * e }).sum::<f64>() / (kept.len() - 1) as f64)
    } else {
        0.0
    };
    Ok(BootstrapOutcome {
        variant: Variant::Pairs,
        t_obs,
        p_sym: symmetric_pvalue(t_obs, &t_star),
        p_equal_tail: equal_tail_pvalue(t_obs, &t_star),
        replicates_used: t_star.len(),
        t_star,
        boot_se: Some(boot_se),
        ci: None,
        ci_method: None,
        dropped,
    })
}

/// Equal-tail bootstrap P value of a restricted wild variant at `β0j`,
/// reusing the plan's weight draws.
pub struct RestrictedPvalue<'a, E: Executor> {
    plan: &'a BootstrapPlan,
    d: &'a ClusteredDataset,
    b: &'a ClusterBlocks,
    f: &'a FitResult,
    j: usize,
    factor: Option<SpdFactor>,
    weights: Vec<Vec<f64>>,
    exec: &'a E,
}

impl<'a, E: Executor> RestrictedPvalue<'a, E> {
    pub fn new(
        plan: &'a BootstrapPlan,
        d: &'a ClusteredDataset,
        b: &'a ClusterBlocks,
        f: &'a FitResult,
        j: usize,
        exec: &'a E,
    ) -> Result<Self> {
        plan.validate(b.g())?;
        if !plan.variant.is_restricted() {
            return Err(Error::InvalidArgument("interval inversion needs a restricted wild variant".into()));
        }
        let g = b.g();
        let weights = exec.map(plan.effective_replications(g), |r| plan.weights_for(g, r));
        let factor = restricted_factor(b, j)?;
        Ok(Self { plan, d, b, f, j, factor, weights, exec })
    }

    pub fn outcome(&self, beta0: f64) -> Result<BootstrapOutcome> {
        let r = Restriction::new(self.j, beta0, self.b.k())?;
        let rf = restricted_fit_factored(self.d, self.b, r, self.factor.clone())?;
        let scores = if self.plan.variant == Variant::WcrS { dotted_scores(self.b, &rf)? } else { rf.scores };
        let t_obs = t_obs_cv1(self.b, self.f, self.j, beta0)?;
        let engine = WildEngine::new(self.b, &self.f.xtx_inv, &scores, self.j);
        let raw = self.exec.map(self.weights.len(), |i| engine.t_star(&self.weights[i]));
        let dropped = raw.iter().filter(|t| t.is_none()).count();
        let t_star: Vec<f64> = raw.into_iter().flatten().collect();
        if t_star.is_empty() {
            return Err(Error::TooManyDegenerate { dropped, total: dropped });
        }
        Ok(BootstrapOutcome {
            variant: self.plan.variant,
            t_obs,
            p_sym: symmetric_pvalue(t_obs, &t_star),
            p_equal_tail: equal_tail_pvalue(t_obs, &t_star),
            replicates_used: t_star.len(),
            t_star,
            boot_se: None,
            ci: None,
            ci_method: None,
            dropped,
        })
    }

    pub fn p_equal_tail(&self, beta0: f64) -> Result<f64> {
        Ok(self.outcome(beta0)?.p_equal_tail)
    }
}

/// Inverts the restricted bootstrap test: finds the points on either side of
/// β̂_j where the equal-tail P value crosses α. Brackets with the CV1 Wald
/// half-width scaled by 1, 2, 4, 8, then bisects to `1e−4·se`.
pub fn invert_restricted_ci<E: Executor>(
    plan: &BootstrapPlan,
    d: &ClusteredDataset,
    b: &ClusterBlocks,
    f: &FitResult,
    j: usize,
    alpha: f64,
    exec: &E,
) -> Result<(f64, f64)> {
    let pv = RestrictedPvalue::new(plan, d, b, f, j, exec)?;
    let se = libm::sqrt(cv1_var_j(&f.xtx_inv, &f.scores, j, cv1_scalar(b.g(), b.n, b.k())));
    if !(se > 0.0) {
        return Err(Error::ZeroVariance { index: j });
    }
    let half = se * student_t_quantile(1.0 - alpha / 2.0, (b.g() - 1) as f64);
    let centre = f.beta[j];
    let tol = 1e-4 * se;
    let mut bounds = [0.0; 2];
    for (slot, (sign, side)) in [(-1.0, "lower"), (1.0, "upper")].into_iter().enumerate() {
        let mut inside = centre;
        let mut outside = None;
        for m in [1.0, 2.0, 4.0, 8.0] {
            let x = centre + sign * m * half;
            if pv.p_equal_tail(x)? < alpha {
                outside = Some(x);
                break;
            }
            inside = x;
        }
        let mut outside = outside.ok_or(Error::NoBracket { side })?;
        let mut iter = 0;
        while (outside - inside).abs() > tol && iter < 200 {
            let mid = 0.5 * (inside + outside);
            if pv.p_equal_tail(mid)? < alpha {
                outside = mid;
            } else {
                inside = mid;
            }
            iter += 1;
        }
        bounds[slot] = 0.5 * (inside + outside);
    }
    Ok((bounds[0], bounds[1]))
}

/// One-call driver: computes whatever the variant needs, the P values and
/// (optionally) a confidence interval: studentized for unrestricted and
/// pairs variants, inverted for restricted ones.
#[allow(clippy::too_many_arguments)]
pub fn run_bootstrap<E: Executor>(
    plan: &BootstrapPlan,
    d: &ClusteredDataset,
    b: &ClusterBlocks,
    f: &FitResult,
    jk: Option<&JackknifeSet>,
    j: usize,
    beta0: f64,
    alpha: Option<f64>,
    exec: &E,
) -> Result<BootstrapOutcome> {
    if j >= b.k() {
        return Err(Error::BadCoefficient { index: j, k: b.k() });
    }
    let mut out = if plan.variant == Variant::Pairs {
        pairs_bootstrap(plan, b, f, j, beta0, exec)?
    } else {
        let scores = dgp_scores(plan.variant, d, b, f, jk, Restriction::new(j, beta0, b.k())?)?;
        wild_bootstrap(plan, b, f, &scores, j, beta0, exec)?
    };
    if let Some(alpha) = alpha {
        if plan.variant.is_restricted() {
            out.ci = Some(invert_restricted_ci(plan, d, b, f, j, alpha, exec)?);
            out.ci_method = Some("inverted");
        } else {
            // U variants and pairs: t* is centred on β̂_j, so the same draws
            // give the studentized interval
            let se = libm::sqrt(cv1_var_j(&f.xtx_inv, &f.scores, j, cv1_scalar(b.g(), b.n, b.k())));
            out.ci = Some(studentized_ci(f.beta[j], se, &out.t_star, alpha));
            out.ci_method = Some("studentized");
        }
    }
    Ok(out)
}

/// Warning text when B is too small for the requested level.
pub fn replication_warning(b: usize, alpha: f64) -> Option<String> {
    let needed = libm::ceil(1.0 / alpha - 1.0) as usize;
    (b < needed).then(|| alloc::format!("B = {b} is below 1/alpha - 1 = {needed}"))
}

/// All `2^G` Rademacher t statistics (for small G).
pub fn enumerate_t_stars(engine: &WildEngine, g: usize) -> Vec<Option<f64>> {
    (0..(1u64 << g)).map(|i| engine.t_star(&enumerated_weights(g, i))).collect()
}
