//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use clusterkit::RayonExecutor;
use clusterkit_core::bootstrap::{
    dgp_scores, quantile_indices, run_bootstrap, t_obs_cv1, BootstrapPlan, Variant, Weights, WildEngine,
};
use clusterkit_core::crve::{cv1, cv2, cv3};
use clusterkit_core::design::{ClusterBlocks, ClusteredDataset, Restriction};
use clusterkit_core::diagnostics::partial_leverage_profile;
use clusterkit_core::estimator::{jackknife_estimates, ols_fit};
use clusterkit_core::rng::{stream, StreamRng};
use clusterkit_core::simulate::{
    run_monte_carlo, McDesign, MethodSpec, PlaceboGenerator, PlaceboStrategy, RandomEffects, Disturbances,
};
use clusterkit_core::svtest::{score_variance_statistic, score_variance_test, NestedClustering};
use clusterkit_core::twoway::{robust_max_se, twoway_variance};
use clusterkit_core::{DMatrix, DVector, Error};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

// Tolerances and limits.
const C1_REL_TOL: f64 = 1e-10;
const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_INSTANCES: usize = 100;
const C2_REL_TOL: f64 = 1e-8;
const C2_LIMIT: Duration = Duration::from_secs(5);
const C3_INSTANCES: usize = 50;
const C3_REL_TOL: f64 = 1e-10;
const C4_G: usize = 10;
const C4_B: usize = 1_000_000;
const C4_SE_MULTIPLE: f64 = 3.0;
const C4_LIMIT: Duration = Duration::from_secs(60);
const C5_B: usize = 999;
const C5_ALPHA: f64 = 0.05;
const C6_G: usize = 12;
const C6_TREATED: usize = 4;
const C6_RHO: [f64; 2] = [0.0, 0.25];
const C6_R: usize = 10_000;
const C6_ALPHA: f64 = 0.05;
const C6_CV1_MIN: f64 = 0.07;
const C6_WCRS_BAND: (f64, f64) = (0.03, 0.08);
const C6_LIMIT: Duration = Duration::from_secs(600);
const C7_COARSE: usize = 20;
const C7_FINE_PER: usize = 4;
const C7_R: usize = 5000;
const C7_BAND: (f64, f64) = (0.02, 0.09);
const C7_LIMIT: Duration = Duration::from_secs(300);
const C8_INSTANCES: usize = 1000;
const C9_L: [f64; 3] = [0.3571, 0.1429, 0.5000];
const C9_L_TOL: f64 = 1e-4;
const C9_VS: f64 = 0.2908;
const C9_VS_TOL: f64 = 1e-4;
const C9_GSTAR: f64 = 2.324;
const C9_GSTAR_TOL: f64 = 1e-3;
const C10_THREADS: [&str; 3] = ["1", "4", "16"];

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random dataset with `sizes` clusters and `k` columns (first is a constant).
fn random_design(rng: &mut StreamRng, sizes: &[usize], k: usize) -> Option<ClusteredDataset> {
    let n: usize = sizes.iter().sum();
    if n <= k + 1 {
        return None;
    }
    let x = DMatrix::from_fn(n, k, |_, c| if c == 0 { 1.0 } else { normal(rng) });
    let y: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let names = (0..k).map(|c| format!("x{c}")).collect();
    let d = ClusteredDataset::from_sizes(y, x, names, sizes).ok()?;
    ols_fit(&d, &ClusterBlocks::build(&d)).ok()?;
    Some(d)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = stream(1, &[1]);
    for trial in 0..20 {
        let n = 15 + trial * 3;
        let k = 2 + trial % 3;
        let d = random_design(&mut rng, &vec![1; n], k).expect("full rank");
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let a = &f.xtx_inv;
        let nf = n as f64;
        let (mut m1, mut m2, mut m3) = (DMatrix::zeros(k, k), DMatrix::zeros(k, k), DMatrix::zeros(k, k));
        for i in 0..n {
            let xi: DVector<f64> = d.x().row(i).transpose();
            let h = (xi.transpose() * a * &xi)[(0, 0)];
            let u2 = f.residuals[i] * f.residuals[i];
            let xx = &xi * xi.transpose();
            m1 += &xx * u2;
            m2 += &xx * (u2 / (1.0 - h));
            m3 += &xx * (u2 / ((1.0 - h) * (1.0 - h)));
        }
        let hc1 = a * m1 * a * (nf / (nf - k as f64));
        let hc2 = a * m2 * a;
        let hc3 = a * m3 * a * ((nf - 1.0) / nf);
        let jk = jackknife_estimates(&b).unwrap();
        worst = worst
            .max(rel(&cv1(&b, &f).matrix, &hc1))
            .max(rel(&cv2(&d, &f).matrix, &hc2))
            .max(rel(&cv3(&jk, &f).unwrap().matrix, &hc3));
    }
    let t = start.elapsed();
    outcome(
        worst < C1_REL_TOL && t < C1_LIMIT,
        format!("HC reduction max rel err {worst:.2e} (< {C1_REL_TOL:.0e}), {:.3}s (< {}s)", t.as_secs_f64(), C1_LIMIT.as_secs()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2, &[2]);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < C2_INSTANCES {
        let g = rng.random_range(2..=8);
        let sizes: Vec<usize> = (0..g).map(|_| rng.random_range(1..=6)).collect();
        let k = rng.random_range(1..=4);
        let Some(d) = random_design(&mut rng, &sizes, k) else { continue };
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let Ok(jk) = jackknife_estimates(&b) else { continue };
        let mut used = false;
        for (cg, r) in d.ranges().iter().enumerate() {
            let Some(bg) = &jk.beta_g[cg] else { continue };
            let xg = d.x().rows(r.start, r.len()).into_owned();
            let m = DMatrix::identity(r.len(), r.len()) - &xg * &f.xtx_inv * xg.transpose();
            if m.clone().symmetric_eigenvalues().min() < 1e-8 {
                continue;
            }
            let rhs = xg.transpose() * m.try_inverse().unwrap() * f.residuals.rows(r.start, r.len());
            let lhs = &b.xtx * (&f.beta - bg);
            worst = worst.max((&lhs - &rhs).amax() / rhs.amax().max(1e-12));
            used = true;
        }
        if used {
            checked += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        worst < C2_REL_TOL && t < C2_LIMIT,
        format!(
            "jackknife identity on {checked} instances, max rel err {worst:.2e} (< {C2_REL_TOL:.0e}), {:.3}s (< {}s)",
            t.as_secs_f64(),
            C2_LIMIT.as_secs()
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = stream(3, &[3]);
    let (mut worst_r, mut worst_u): (f64, f64) = (0.0, 0.0);
    let mut wcus_max: f64 = 0.0;
    let mut done = 0;
    while done < C3_INSTANCES {
        let g = rng.random_range(3..=10);
        let sizes: Vec<usize> = (0..g).map(|_| rng.random_range(1..=8)).collect();
        let k = rng.random_range(2..=4);
        let Some(d) = random_design(&mut rng, &sizes, k) else { continue };
        let b = ClusterBlocks::build(&d);
        let f = ols_fit(&d, &b).unwrap();
        let j = rng.random_range(0..k);
        let beta0: f64 = normal(&mut rng);
        let Ok(t_obs) = t_obs_cv1(&b, &f, j, beta0) else { continue };
        let ones = vec![1.0; g];
        let restriction = Restriction::new(j, beta0, k).unwrap();
        let sc = dgp_scores(Variant::WcrC, &d, &b, &f, None, restriction).unwrap();
        let tr = WildEngine::new(&b, &f.xtx_inv, &sc, j).t_star(&ones).unwrap();
        worst_r = worst_r.max((tr - t_obs).abs() / t_obs.abs());
        let su = dgp_scores(Variant::WcuC, &d, &b, &f, None, restriction).unwrap();
        if let Some(tu) = WildEngine::new(&b, &f.xtx_inv, &su, j).t_star(&ones) {
            worst_u = worst_u.max(tu.abs());
        }
        if let Ok(ss) = dgp_scores(Variant::WcuS, &d, &b, &f, None, restriction) {
            if let Some(ts) = WildEngine::new(&b, &f.xtx_inv, &ss, j).t_star(&ones) {
                wcus_max = wcus_max.max(ts.abs());
            }
        }
        done += 1;
    }
    outcome(
        worst_r < C3_REL_TOL && worst_u < C3_REL_TOL,
        format!(
            "{done} instances: WCR-C all-plus rel err {worst_r:.2e}, WCU-C all-plus |t*| max {worst_u:.2e} (< {C3_REL_TOL:.0e}); \
             WCU-S all-plus |t*| max {wcus_max:.3} (informational, jackknife scores do not sum to zero)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(4, &[4]);
    let sizes: Vec<usize> = (0..C4_G).map(|g| 5 + g % 4).collect();
    let n: usize = sizes.iter().sum();
    let mut d = random_design(&mut rng, &sizes, 3).unwrap();
    // mild signal so p is away from 0 and 1
    let y: DVector<f64> = DVector::from_fn(n, |i, _| d.y()[i] + 0.15 * d.x()[(i, 2)]);
    d = d.with_y(y);
    let b = ClusterBlocks::build(&d);
    let f = ols_fit(&d, &b).unwrap();
    let exec = RayonExecutor::new(0).unwrap();
    let j = 2;
    let enumerated =
        run_bootstrap(&BootstrapPlan::enumerated(Variant::WcrC, 0), &d, &b, &f, None, j, 0.0, None, &exec).unwrap();
    let sampled = run_bootstrap(
        &BootstrapPlan::new(Variant::WcrC, C4_B, Weights::Rademacher, 44),
        &d,
        &b,
        &f,
        None,
        j,
        0.0,
        None,
        &exec,
    )
    .unwrap();
    let p = enumerated.p_sym;
    let bound = C4_SE_MULTIPLE * (p * (1.0 - p) / C4_B as f64).sqrt();
    let diff = (sampled.p_sym - p).abs();
    let t = start.elapsed();
    outcome(
        diff <= bound && t < C4_LIMIT && enumerated.replicates_used == 1 << C4_G,
        format!(
            "G={C4_G}: enumerated p {p:.6} over {} vectors, sampled p {:.6} (B={C4_B}), |diff| {diff:.2e} <= {bound:.2e}; {:.1}s (< {}s)",
            enumerated.replicates_used,
            sampled.p_sym,
            t.as_secs_f64(),
            C4_LIMIT.as_secs()
        ),
    )
}

fn criterion_5() -> Outcome {
    let (lo, hi) = quantile_indices(C5_B, C5_ALPHA);
    outcome((lo, hi) == (25, 975), format!("B={C5_B}, alpha={C5_ALPHA}: order statistics ({lo}, {hi}), expected (25, 975)"))
}

/// G = 12 clusters with log-normal sizes, treatment in 4 clusters, one
/// continuous covariate.
fn size_design() -> ClusteredDataset {
    let mut rng = stream(6, &[6]);
    let sizes: Vec<usize> =
        (0..C6_G).map(|_| ((3.0 + normal(&mut rng)).exp().round() as usize).clamp(2, 400)).collect();
    let n: usize = sizes.iter().sum();
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
    let x = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => 1.0,
        1 => f64::from(labels[i] < C6_TREATED),
        _ => 0.0,
    });
    let mut x = x;
    for i in 0..n {
        x[(i, 2)] = normal(&mut rng);
    }
    let y = vec![0.0; n];
    ClusteredDataset::new(y, x, vec!["const".into(), "treat".into(), "z".into()], &labels, None)
        .unwrap()
        .with_treatment(1)
        .unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let d = size_design();
    let mut design =
        McDesign::new(1, vec![MethodSpec::Cv1, MethodSpec::Cv3, MethodSpec::Boot(Variant::WcrS)], C6_RHO.to_vec(), C6_R, 66);
    design.settings.alpha = C6_ALPHA;
    let rep = run_monte_carlo(&d, &design, &RayonExecutor::new(0).unwrap()).unwrap();
    let t = start.elapsed();
    let mut pass = t < C6_LIMIT;
    let mut parts = Vec::new();
    for p in &rep.points {
        let f: Vec<f64> = p.cells.iter().map(|c| c.frequency).collect();
        let ok = f[0] > f[1] && f[0] > C6_CV1_MIN && (C6_WCRS_BAND.0..=C6_WCRS_BAND.1).contains(&f[2]);
        pass &= ok;
        parts.push(format!("{}: CV1 {:.4}, CV3 {:.4}, WCR-S {:.4}", p.label, f[0], f[1], f[2]));
    }
    outcome(
        pass,
        format!(
            "sizes {:?}, R={C6_R}: {}; need CV1 > CV3, CV1 > {C6_CV1_MIN}, WCR-S in [{}, {}]; {:.1}s (< {}s)",
            d.cluster_sizes(),
            parts.join("; "),
            C6_WCRS_BAND.0,
            C6_WCRS_BAND.1,
            t.as_secs_f64(),
            C6_LIMIT.as_secs()
        ),
    )
}

/// Disturbances correlated within fine clusters only.
struct FineRandomEffects {
    fine: Vec<std::ops::Range<usize>>,
    inner: RandomEffects,
}

impl Disturbances for FineRandomEffects {
    fn fill(&self, _coarse: &[std::ops::Range<usize>], rng: &mut StreamRng, out: &mut [f64]) {
        self.inner.fill(&self.fine, rng, out);
    }
    fn label(&self) -> String {
        "fine".into()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let fine_size = 5;
    let n = C7_COARSE * C7_FINE_PER * fine_size;
    let coarse: Vec<usize> = (0..n).map(|i| i / (C7_FINE_PER * fine_size)).collect();
    let fine: Vec<usize> = (0..n).map(|i| i / fine_size).collect();
    let mut rng = stream(7, &[7]);
    let fine_effect: Vec<f64> = (0..C7_COARSE * C7_FINE_PER).map(|_| normal(&mut rng)).collect();
    let mut x = DMatrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
    for i in 0..n {
        x[(i, 1)] = fine_effect[fine[i]] + normal(&mut rng);
    }
    let d = ClusteredDataset::new(vec![0.0; n], x, vec!["const".into(), "x".into()], &coarse, None).unwrap();
    let nest = NestedClustering::new(&coarse, &fine).unwrap();
    let fine_ranges: Vec<_> = (0..C7_COARSE * C7_FINE_PER).map(|f| f * fine_size..(f + 1) * fine_size).collect();
    let model = FineRandomEffects { fine: fine_ranges, inner: RandomEffects::new(0.3, 1.0).unwrap() };
    let exec = RayonExecutor::new(0).unwrap();
    let rejections: usize = clusterkit_core::exec::Executor::map(&exec, C7_R, |r| {
        let mut u = vec![0.0; n];
        model.fill(d.ranges(), &mut stream(77, &[r as u64]), &mut u);
        let dr = d.with_y(DVector::from_vec(u));
        usize::from(score_variance_test(&dr, &nest, 1).map(|s| s.p_asymptotic < 0.05).unwrap_or(false))
    })
    .into_iter()
    .sum();
    let freq = rejections as f64 / C7_R as f64;

    // M_g = 1: fine clusters equal coarse clusters
    let trivial = NestedClustering::new(&coarse, &coarse).unwrap();
    let b = ClusterBlocks::build(&d.with_y(DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin())));
    let dd = d.with_y(DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin()));
    let f = ols_fit(&dd, &b).unwrap();
    let s = score_variance_statistic(&dd, &f, &trivial, 1).unwrap();
    let zero = s.theta_hat == 0.0 && s.theta_g.iter().all(|&v| v == 0.0);
    let t = start.elapsed();
    outcome(
        (C7_BAND.0..=C7_BAND.1).contains(&freq) && zero && t < C7_LIMIT,
        format!(
            "G={C7_COARSE} x {C7_FINE_PER} fine, R={C7_R}: rejection {freq:.4} in [{}, {}]; theta_hat with M_g=1 is {}; {:.1}s (< {}s)",
            C7_BAND.0,
            C7_BAND.1,
            s.theta_hat,
            t.as_secs_f64(),
            C7_LIMIT.as_secs()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = stream(8, &[8]);
    // coincident partitions
    let d = random_design(&mut rng, &[4, 5, 6, 3, 7, 5], 3).unwrap();
    let ids = d.cluster_ids().to_vec();
    let d = d.with_cluster2(&ids).unwrap();
    let f = ols_fit(&d, &ClusterBlocks::build(&d)).unwrap();
    let tw = twoway_variance(&d, &f).unwrap();
    let coincident = tw.combined == tw.sigma_g;

    let mut violations = 0;
    let mut checked = 0;
    while checked < C8_INSTANCES {
        let g = rng.random_range(3..=8);
        let sizes: Vec<usize> = (0..g).map(|_| rng.random_range(2..=6)).collect();
        let k = rng.random_range(2..=4);
        let Some(d) = random_design(&mut rng, &sizes, k) else { continue };
        let h = rng.random_range(2..=5);
        let dim2: Vec<usize> = (0..d.n()).map(|_| rng.random_range(0..h)).collect();
        let d = d.with_cluster2(&dim2).unwrap();
        let f = ols_fit(&d, &ClusterBlocks::build(&d)).unwrap();
        let Ok(r) = robust_max_se(&d, &f, rng.random_range(0..k), 0.0, 0.05) else { continue };
        if !(r.test.se >= r.se_dim1 && r.test.se >= r.se_dim2) {
            violations += 1;
        }
        checked += 1;
    }
    outcome(
        coincident && violations == 0,
        format!(
            "coincident partitions combined == one-way filling: {coincident}; max-se below a one-way se in {violations} of {checked} instances"
        ),
    )
}

fn ds1() -> ClusteredDataset {
    let x = DMatrix::from_fn(6, 2, |i, c| if c == 0 { 1.0 } else { (i + 1) as f64 });
    ClusteredDataset::from_sizes(vec![1.0, 1.0, 2.0, 2.0, 3.0, 4.0], x, vec!["const".into(), "x".into()], &[1, 2, 3])
        .unwrap()
}

fn criterion_9() -> Outcome {
    let p = partial_leverage_profile(&ds1(), 1).unwrap();
    let l_ok = p.leverage.iter().zip(C9_L).all(|(a, b)| (a - b).abs() <= C9_L_TOL);
    let vs_ok = (p.scaled_variance - C9_VS).abs() <= C9_VS_TOL;
    let g_ok = (p.g_star0 - C9_GSTAR).abs() <= C9_GSTAR_TOL;
    outcome(
        l_ok && vs_ok && g_ok,
        format!(
            "DS1 L = ({:.4}, {:.4}, {:.4}), V_s = {:.4}, G*(0) = {:.4}",
            p.leverage[0], p.leverage[1], p.leverage[2], p.scaled_variance, p.g_star0
        ),
    )
}

fn write_demo_csv(dir: &std::path::Path) -> std::path::PathBuf {
    let mut rng = stream(10, &[10]);
    let mut s = String::from("y,x,treat,cid,fid,region\n");
    for g in 0..14 {
        let v = normal(&mut rng);
        for i in 0..6 {
            let x = normal(&mut rng);
            let t = u8::from(g < 5);
            let y = v + 0.5 * x + normal(&mut rng);
            s += &format!("{y},{x},{t},c{g},f{g}_{},r{}\n", i % 2, (g + i) % 5);
        }
    }
    let path = dir.join("demo.csv");
    std::fs::write(&path, s).unwrap();
    path
}

fn run_cli(args: &[&str], threads: &str) -> (i32, Vec<u8>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_clusterkit"))
        .args(args)
        .args(["--threads", threads, "--format", "json"])
        .env_remove("CLUSTERKIT_THREADS")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout, String::from_utf8_lossy(&out.stderr).into_owned())
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_demo_csv(dir.path());
    let csv = csv.to_str().unwrap();
    let data = ["--y", "y", "--x", "x", "--treatment", "treat", "--cluster", "cid", csv];
    let commands: Vec<Vec<&str>> = vec![
        [&["boot", "--variant", "wcr-s", "--B", "999", "--seed", "7"][..], &data[..]].concat(),
        [&["boot", "--variant", "pairs", "--B", "499", "--seed", "7"][..], &data[..]].concat(),
        [&["svtest", "--fine", "fid", "--boot", "199", "--seed", "3"][..], &data[..]].concat(),
        [&["mc", "--rho", "0,0.2", "--R", "200", "--methods", "cv1,cv3,wcr-c,pairs", "--B", "99", "--seed", "5"][..], &data[..]]
            .concat(),
        [&["mc", "--outcome", "binary", "--R", "100", "--seed", "5"][..], &data[..]].concat(),
        [&["placebo", "--mode", "both", "--R", "200", "--seed", "9"][..], &data[..]].concat(),
    ];
    let mut failures = Vec::new();
    for cmd in &commands {
        let reference = run_cli(cmd, C10_THREADS[0]);
        if reference.0 != 0 {
            failures.push(format!("{} exited {}: {}", cmd[0], reference.0, reference.2.trim()));
            continue;
        }
        let again = run_cli(cmd, C10_THREADS[0]);
        if again.1 != reference.1 {
            failures.push(format!("{} differs between runs", cmd[0]));
        }
        for th in &C10_THREADS[1..] {
            if run_cli(cmd, th).1 != reference.1 {
                failures.push(format!("{} differs with --threads {th}", cmd[0]));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} stochastic commands byte-identical across repeat runs and --threads 1/4/16", commands.len())
        } else {
            failures.join("; ")
        },
    )
}

fn criterion_11() -> Outcome {
    // 10 clusters, one treated: 9 alternative assignments
    let x = DMatrix::from_fn(30, 2, |i, c| if c == 0 { 1.0 } else { f64::from(i < 3) });
    let d = ClusteredDataset::from_sizes(vec![0.0; 30], x, vec!["const".into(), "t".into()], &[3; 10]).unwrap();
    let refused = PlaceboGenerator::new(&d, PlaceboStrategy::cluster_level_from_column(&d, 1), Some(1), 0);
    let refused_ok = matches!(refused, Err(Error::TooFewAssignments { available: 9 }));
    let msg = refused.err().map(|e| e.to_string()).unwrap_or_default();

    let x = DMatrix::from_fn(84, 2, |i, c| if c == 0 { 1.0 } else { f64::from(i < 40) });
    let d = ClusteredDataset::from_sizes(vec![0.0; 84], x, vec!["const".into(), "t".into()], &[2; 42]).unwrap();
    let gen = PlaceboGenerator::new(&d, PlaceboStrategy::ClusterLevel { treated: 20 }, Some(1), 0);
    let proceeds = match &gen {
        Ok(g) => {
            !g.without_replacement()
                && g.space() == 513_791_607_420
                && (0..50).all(|r| {
                    let z = g.draw(r);
                    z.sum() == 40.0 && z != d.x().column(1).into_owned()
                })
        }
        Err(_) => false,
    };
    outcome(
        refused_ok && proceeds,
        format!("9-assignment design refused (\"{msg}\"); 42 choose 20 = 513791607420 sampled: {proceeds}"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("HC reduction", criterion_1),
        ("jackknife identity", criterion_2),
        ("wild bootstrap identity", criterion_3),
        ("enumeration vs sampling", criterion_4),
        ("quantile convention", criterion_5),
        ("size ordering", criterion_6),
        ("score-variance null size", criterion_7),
        ("two-way reductions", criterion_8),
        ("diagnostics on DS1", criterion_9),
        ("determinism", criterion_10),
        ("placebo feasibility guard", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.ends_with(&format!(" {p}")) || name.contains(p.as_str())) {
            continue;
        }
        let o = f();
        println!("{id} ({name}): {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
