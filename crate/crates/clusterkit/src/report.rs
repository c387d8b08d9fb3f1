//! JSON and text rendering of results.
//!
//! JSON objects use sorted keys and shortest round-trip float formatting,
//! so equal results always serialize to equal bytes.

use std::fmt::Write as _;

use clusterkit_core::bootstrap::BootstrapOutcome;
use clusterkit_core::crve::{TestResult, VarianceEstimate};
use clusterkit_core::diagnostics::RedFlagReport;
use clusterkit_core::simulate::SimReport;
use clusterkit_core::svtest::SvResult;
use clusterkit_core::twoway::MaxSeResult;
use clusterkit_core::DMatrix;
use serde_json::{json, Map, Value};

pub const TOOL: &str = "clusterkit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

pub fn test(t: &TestResult) -> Value {
    json!({
        "coef": num(t.coef),
        "se": num(t.se),
        "t_stat": num(t.t_stat),
        "p_value": num(t.p_value),
        "ci_lower": num(t.ci_lower),
        "ci_upper": num(t.ci_upper),
        "dof": num(t.dof),
        "method": t.method,
    })
}

pub fn variance(v: &VarianceEstimate, names: &[String]) -> Value {
    let se: Map<String, Value> = names.iter().enumerate().map(|(j, n)| (n.clone(), num(v.se(j)))).collect();
    json!({
        "kind": v.kind.as_str(),
        "matrix": matrix(&v.matrix),
        "se": se,
        "dof": num(v.dof),
        "effective_g": v.effective_g,
        "flagged_clusters": v.flagged,
        "warnings": v.warnings,
    })
}

pub fn bootstrap(o: &BootstrapOutcome) -> Value {
    json!({
        "variant": o.variant.as_str(),
        "t_obs": num(o.t_obs),
        "p_sym": num(o.p_sym),
        "p_equal_tail": num(o.p_equal_tail),
        "boot_se": opt(o.boot_se),
        "ci": o.ci.map_or(Value::Null, |(a, b)| json!([num(a), num(b)])),
        "ci_method": o.ci_method,
        "replicates_used": o.replicates_used,
        "dropped": o.dropped,
    })
}

pub fn svtest(r: &SvResult) -> Value {
    let s = &r.statistic;
    json!({
        "sigma2_coarse": num(s.sigma2_coarse),
        "sigma2_fine": num(s.sigma2_fine),
        "theta_hat": num(s.theta_hat),
        "theta_g": s.theta_g.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "sd": num(s.sd),
        "statistic": num(s.sv_stat),
        "p_asymptotic": num(r.p_asymptotic),
        "p_bootstrap": opt(r.p_bootstrap),
        "bootstrap_reps": r.bootstrap_reps,
    })
}

pub fn twoway(r: &MaxSeResult, matrix_json: Value) -> Value {
    json!({
        "test": test(&r.test),
        "se_dim1": num(r.se_dim1),
        "se_dim2": num(r.se_dim2),
        "se_twoway": opt(r.se_twoway),
        "source": r.source.as_str(),
        "psd": r.psd_flag,
        "negative_diagonal": r.negative_diagonal,
        "min_eigenvalue": num(r.min_eigenvalue),
        "twoway_matrix": matrix_json,
    })
}

pub fn diagnostics(r: &RedFlagReport) -> Value {
    let th = &r.thresholds;
    json!({
        "g": r.g,
        "n": r.n,
        "cluster_sizes": {
            "min": r.sizes.min,
            "median": num(r.sizes.median),
            "max": r.sizes.max,
            "largest_share": num(r.sizes.largest_share),
        },
        "treated_clusters": r.treated_clusters.map(|(g1, _)| g1),
        "control_clusters": r.treated_clusters.map(|(_, g0)| g0),
        "leverage": r.leverage.as_ref().map(|l| json!({
            "coef": l.coef_name,
            "partial_leverage": l.leverage.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "scaled_variance": num(l.scaled_variance),
            "g_star0": num(l.g_star0),
        })),
        "cluster_variance": {
            "sigma2": r.variance.sigma2.iter().map(|v| opt(*v)).collect::<Vec<_>>(),
            "mean": num(r.variance.mean),
            "cv": num(r.variance.cv),
        },
        "treatment_variance": r.treatment_variance.as_ref().map(|t| json!({
            "eta1": num(t.eta1),
            "eta2": num(t.eta2),
            "ratio": num(t.ratio),
            "test": t.test.as_ref().map(test),
        })),
        "omit_one": r.omit_one.as_ref().map(|o| json!({
            "deltas": o.deltas.iter().map(|v| opt(*v)).collect::<Vec<_>>(),
            "iqr": num(o.iqr),
            "max_cluster": o.max_cluster,
            "max_abs_delta": num(o.max_abs_delta),
            "flagged": o.flagged,
        })),
        "thresholds": {
            "min_clusters": th.min_clusters,
            "min_treated_clusters": th.min_treated_clusters,
            "max_cluster_share": num(th.max_cluster_share),
            "low_g_star_fraction": num(th.low_g_star_fraction),
            "max_variance_cv": num(th.max_variance_cv),
            "eta_p_value": num(th.eta_p_value),
            "eta_ratio": num(th.eta_ratio),
            "omit_one_iqr_multiple": num(th.omit_one_iqr_multiple),
        },
        "flags": r.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
        "notes": r.notes,
    })
}

pub fn simulation(r: &SimReport) -> Value {
    json!({
        "alpha": num(r.alpha),
        "band": [num(r.band.0), num(r.band.1)],
        "seed": r.seed,
        "warnings": r.warnings,
        "points": r.points.iter().map(|p| json!({
            "label": p.label,
            "rho": opt(p.rho),
            "replications": p.replications,
            "realized_correlation": num(p.realized_correlation),
            "mean_outcome": opt(p.mean_outcome),
            "methods": p.cells.iter().map(|c| json!({
                "method": c.method,
                "rejections": c.rejections,
                "failures": c.failures,
                "frequency": num(c.frequency),
                "mc_se": num(c.mc_se),
                "verdict": c.verdict.as_str(),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

/// Right-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Fixed-width number for text tables.
pub fn fmt(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{x:.6e}")
    } else {
        format!("{x:.6}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt)
}
