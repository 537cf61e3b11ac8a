//! Acceptance suite: one PASS/FAIL line per criterion at full sample sizes.
//! Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use burgers_harnack::config::RunConfig;
use burgers_harnack::convolution::Convolver;
use burgers_harnack::experiments::{random_decaying_field, run_experiment};
use burgers_harnack::mc::McSettings;
use burgers_harnack::report::InequalityReport;
use burgers_harnack::runner::{dispatch, with_threads, Status};
use burgers_harnack::spectral::{bilinear_b, SpectralField};
use num_complex::Complex64;

type Outcome = Result<String, String>;

fn rows(name: &str, cfg: &RunConfig) -> Result<Vec<InequalityReport>, String> {
    run_experiment(name, cfg).map_err(|e| format!("{name} failed to run: {e}"))
}

fn str_param<'a>(r: &'a InequalityReport, key: &str) -> &'a str {
    r.param(key).and_then(|v| v.as_str()).unwrap_or("")
}

fn f64_param(r: &InequalityReport, key: &str) -> f64 {
    r.param(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN)
}

fn failures(rs: &[&InequalityReport]) -> usize {
    rs.iter().filter(|r| !r.passed()).count()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn bilinear_bound() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("bilinear", &cfg)?;
    let analytic = &rs[0];
    let expected = 1.0 / (4.0 * PI * PI);
    let err = (analytic.left - expected).abs();
    let ratios: Vec<&InequalityReport> = rs.iter().filter(|r| r.param("pair").is_some_and(|p| p.is_u64())).collect();
    let over = ratios.iter().filter(|r| r.left > 1.0).count();
    let worst = ratios.iter().map(|r| r.left).fold(0.0, f64::max);
    let detail = format!(
        "{} pairs at m = {}, {over} above the bound, max ratio {worst:.4}; sin*sin ratio error {err:.1e}",
        ratios.len(),
        cfg.bilinear.m
    );
    if ratios.len() == 10_000 && over == 0 && err <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn skew_identity() -> Outcome {
    let m = 32;
    let mcs = McSettings::new(1000, 42, 1);
    let mut conv = Convolver::new(m);
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..mcs.samples {
        let x = random_decaying_field(m, &mut mcs.rng(i));
        let direct = bilinear_b(&x, &x).map_err(|e| e.to_string())?.inner(&x).abs();
        let mut sq = vec![Complex64::new(0.0, 0.0); m];
        conv.square(x.coeffs(), &mut sq);
        let b: Vec<Complex64> =
            sq.iter().enumerate().map(|(k, c)| c * Complex64::new(0.0, 0.5 * (k + 1) as f64)).collect();
        let fft = SpectralField::from_coeffs(b, 0.0).inner(&x).abs();
        worst = (worst.0.max(direct), worst.1.max(fft));
    }
    let detail = format!("1000 fields at m = {m}: max |<B(x,x),x>| direct {:.1e}, padded FFT {:.1e}", worst.0, worst.1);
    if worst.0 <= 1e-10 && worst.1 <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn energy_identity() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("energy", &cfg)?;
    let r = rs
        .iter()
        .find(|r| str_param(r, "form") == "identity")
        .ok_or("no extrapolated row")?;
    let detail = format!(
        "n = {}, T = {}: |extrapolated - |Q|_HS^2 T| = {:.2e}, 3 SE = {:.2e}",
        cfg.energy.samples,
        f64_param(r, "t_end"),
        r.left,
        3.0 * r.combined_se()
    );
    if r.passed() && f64_param(r, "t_end") == 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exp_moment() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("exp-moment", &cfg)?;
    let r = &rs[0];
    let lambda = f64_param(r, "lambda");
    let detail = format!(
        "n = {}, t = {}, lambda = {lambda}: left {:.4} +- {:.4}, right {:.4}",
        cfg.exp_moment.samples, cfg.exp_moment.t, r.left, r.left_se, r.right
    );
    if r.passed() && (lambda - 4.0).abs() < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("gradient", &cfg)?;
    let bound: Vec<&InequalityReport> = rs
        .iter()
        .filter(|r| {
            str_param(r, "bound") == "gradient"
                && str_param(r, "variant") == "primary"
                && [0.1, 0.25, 0.5].contains(&f64_param(r, "t"))
        })
        .collect();
    let fd: Vec<&InequalityReport> = rs.iter().filter(|r| str_param(r, "bound") == "tangent_vs_finite_difference").collect();
    let order: Vec<&InequalityReport> = rs.iter().filter(|r| str_param(r, "bound") == "residual_order").collect();
    let families: std::collections::BTreeSet<&str> =
        bound.iter().map(|r| str_param(r, "f").split('(').next().unwrap_or("")).collect();
    let slopes: Vec<String> = order.iter().map(|r| format!("{:.3}", f64_param(r, "slope"))).collect();
    let detail = format!(
        "bound rows {}/{} pass over {} families, finite-difference rows {}/{} agree, residual slopes [{}]",
        bound.len() - failures(&bound),
        bound.len(),
        families.len(),
        fd.len() - failures(&fd),
        fd.len(),
        slopes.join(", ")
    );
    let complete = !bound.is_empty() && !fd.is_empty() && !order.is_empty() && families.len() == 2;
    if complete && failures(&bound) + failures(&fd) + failures(&order) == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_harnack() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("log-harnack", &cfg)?;
    let full: Vec<&InequalityReport> = rs.iter().filter(|r| str_param(r, "constant_form") == "full").collect();
    let same: Vec<&&InequalityReport> = full.iter().filter(|r| f64_param(r, "q_distance_sq") == 0.0).collect();
    let same_ok = same.iter().all(|r| r.margin >= 0.0);
    let half: Vec<&InequalityReport> = rs.iter().filter(|r| str_param(r, "constant_form") == "half_rate").collect();
    let detail = format!(
        "n = {}: {}/{} rows pass, {} coincident-point rows with margin >= 0: {same_ok}; half-rate constant {}/{} pass",
        cfg.log_harnack.samples,
        full.len() - failures(&full),
        full.len(),
        same.len(),
        half.len() - failures(&half),
        half.len()
    );
    // 4 times x (3 displacements + coincident point) x 2 functions
    if full.len() == 32 && failures(&full) == 0 && !same.is_empty() && same_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn convergence() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("convergence", &cfg)?;
    let series = |q: &str| -> Vec<f64> { rs.iter().filter(|r| str_param(r, "quantity") == q).map(|r| r.left).collect() };
    let gaps = series("median_gap");
    let diffs = series("semigroup_gap");
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" > ");
    let detail = format!(
        "m = {:?} vs {}: median gap {}; |P f - P_ref f| {}",
        cfg.convergence.ms,
        cfg.convergence.reference_m(),
        fmt(&gaps),
        fmt(&diffs)
    );
    if gaps.len() == 3 && strictly_decreasing(&gaps) && strictly_decreasing(&diffs) && cfg.convergence.reference_m() == 64 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn irreducibility() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("irreducibility", &cfg)?;
    let r = &rs[0];
    let detail = format!(
        "n = {}: {} hits, Wilson lower bound {:.4}",
        cfg.irreducibility.samples,
        r.param("hits").map(|v| v.to_string()).unwrap_or_default(),
        r.right
    );
    if r.passed() && r.right > 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strong_feller() -> Outcome {
    let cfg = RunConfig::default();
    let rs = rows("strong-feller", &cfg)?;
    let diffs: Vec<f64> = rs.iter().map(|r| r.left).collect();
    let dist: Vec<f64> = rs.iter().map(|r| f64_param(r, "q_distance")).collect();
    let halving = dist.windows(2).all(|w| (w[1] / w[0] - 0.5).abs() < 1e-12);
    let detail = format!(
        "|P f(y_k) - P f(x)| = {} at |x - y_k|_Q = {}",
        diffs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "),
        dist.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
    );
    if diffs.len() == 4 && halving && strictly_decreasing(&diffs) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.samples = Some(24);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = dir.path().join("one");
    let b = dir.path().join("three");
    let run = |threads, out: &std::path::Path| with_threads(Some(threads), || dispatch("all", &cfg, out, None));
    let first = run(1, &a).map_err(|e| e.to_string())?;
    run(3, &b).map_err(|e| e.to_string())?;
    let mut differ = Vec::new();
    for o in &first.manifest.outputs {
        let x = std::fs::read(a.join(&o.file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&o.file)).map_err(|e| e.to_string())?;
        if x != y {
            differ.push(o.file.clone());
        }
    }
    let detail = format!(
        "\"all\" with seed {} at 1 and 3 threads: {} CSVs, {} differ{}",
        cfg.seed,
        first.manifest.outputs.len(),
        differ.len(),
        if differ.is_empty() { String::new() } else { format!(" ({})", differ.join(", ")) }
    );
    if differ.is_empty() && first.manifest.outputs.len() == 9 && first.status() != Status::Usage {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("bilinear bound", bilinear_bound),
        ("skew identity", skew_identity),
        ("energy identity", energy_identity),
        ("exponential moment", exp_moment),
        ("gradient estimate", gradient),
        ("log-harnack inequality", log_harnack),
        ("galerkin convergence", convergence),
        ("irreducibility", irreducibility),
        ("strong feller probe", strong_feller),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let clock = Instant::now();
        let outcome = check();
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.0} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.0} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
