//! Acceptance suite: each criterion prints one PASS/FAIL line with the
//! measured quantities. The process exits nonzero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use ntkgd::abstract_gd::{decay_fit, groenwall_random_check};
use ntkgd::deep::{self, gamma_psd_ratio, init_deep, uniform_widths};
use ntkgd::harness::{self, ExperimentConfig, ExperimentKind, Format};
use ntkgd::operator::{holder_points, HolderSampling, KernelOperator};
use ntkgd::shallow::{concentration_experiment, limit_ntk_shallow, weight_distance_margins};
use ntkgd::spectral1d::{eval_basis, omega, synthesize_target_with, Parity};
use ntkgd::{Activation, Domain, QuadratureGrid, SpectralCoeffs};
use rand_distr::{Distribution, StandardNormal};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn shallow_config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(extra).expect("valid config").resolve(ExperimentKind::TrainShallow).expect("resolves")
}

fn eigenstructure() -> Verdict {
    let start = Instant::now();
    let grid = QuadratureGrid::gauss_legendre(2000).unwrap();
    let op = KernelOperator::assemble(|x, y| limit_ntk_shallow(Activation::Relu, x, y), &grid).unwrap();
    let pairs = op.eigendecompose(21).unwrap();
    let (mut worst_value, mut worst_vec) = (0.0f64, 0.0f64);
    for (k, pair) in pairs.iter().enumerate() {
        let reference = 1.0 / (2.0 * omega(k) * omega(k));
        worst_value = worst_value.max((pair.value - reference).abs() / reference);
        let err = |sign: f64| {
            let diff: Vec<f64> = grid.nodes().iter().zip(&pair.nodal).map(|(&x, v)| v - sign * eval_basis(k, -x).unwrap()).collect();
            grid.l2_norm(&diff)
        };
        worst_vec = worst_vec.max(err(1.0).min(err(-1.0)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_value < 0.01 && worst_vec < 1e-2 && secs < 30.0,
        format!("max eigenvalue rel err {worst_value:.2e}, max eigenfunction L2 err {worst_vec:.2e} (vs ±φ_k(−x)), {secs:.1}s"),
    )
}

fn coercivity() -> Verdict {
    let grid = QuadratureGrid::gauss_legendre(2000).unwrap();
    let op = KernelOperator::assemble(|x, y| limit_ntk_shallow(Activation::ReluReflected, x, y), &grid).unwrap();
    let gram = op.gram(21).unwrap();
    let mut rng = ntkgd::rng::stream(2, "coercivity-acceptance");
    let ratios: Vec<f64> = (0..100)
        .map(|_| {
            let c: Vec<f64> = (0..21).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = SpectralCoeffs::new(Domain::Interval1d, c).unwrap();
            gram.quadratic_form(&v, 0.0) / v.sobolev_norm_sq(-1.0)
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    verdict((lo - 0.5).abs() <= 0.002 && (hi - 0.5).abs() <= 0.002, format!("ratio range [{lo:.5}, {hi:.5}] over 100 draws"))
}

fn concentration() -> Verdict {
    let start = Instant::now();
    let widths: Vec<usize> = (6..=14).map(|e| 1usize << e).collect();
    let grid = QuadratureGrid::gauss_legendre(256).unwrap();
    let table = concentration_experiment(Activation::ReluReflected, &widths, 20, 1, 0.0, 64, &grid).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict((table.slope + 0.5).abs() <= 0.15 && secs < 300.0, format!("slope {:.4} (r² {:.4}), {secs:.1}s", table.slope, table.r_squared))
}

fn weight_distance() -> Verdict {
    let cfg = shallow_config("");
    let m = cfg.model.m.unwrap();
    let (mut steps, mut bad, mut worst) = (0usize, 0usize, f64::INFINITY);
    for seed in 1..=10 {
        let (trace, _) = harness::experiments::shallow_run(&cfg, m, seed).unwrap();
        for (margin, r) in weight_distance_margins(&trace, m).iter().zip(&trace.records) {
            steps += 1;
            worst = worst.min(*margin);
            if *margin < -1e-12 * r.weight_dist.max(1.0) {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("{steps} steps over 10 runs, {bad} violations, smallest margin {worst:.3e}"))
}

fn groenwall() -> Verdict {
    let draws = groenwall_random_check(1000, 500, 1).unwrap();
    let violations = draws.iter().filter(|d| d.violation.is_some()).count();
    let aborted = draws.iter().filter(|d| d.aborted_at.is_some()).count();
    let checked: usize = draws.iter().map(|d| d.checked_steps).sum();
    verdict(
        violations == 0,
        format!("1000 draws, {checked} checked steps, {violations} violations ({aborted} draws left the positive half-line)"),
    )
}

fn shallow_convergence() -> Verdict {
    let cfg = shallow_config("");
    let (mut ok, mut notes) = (true, Vec::new());
    let mut slowest = 0.0f64;
    for seed in 1..=5 {
        let start = Instant::now();
        let (trace, _) = harness::experiments::shallow_run(&cfg, 4096, seed).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let y0 = trace.records[0].loss_s_sq;
        let smax = trace.records.iter().map(|r| r.loss_s_sq / y0).fold(0.0, f64::max);
        let fit = decay_fit(&trace).unwrap();
        let good = trace.first_non_decrease().is_none() && smax <= 2.0 && fit.rate > 0.0 && fit.r_squared > 0.9;
        ok &= good;
        notes.push(format!("seed {seed}: rate {:.3e} r² {:.3}", fit.rate, fit.r_squared));
    }
    verdict(ok && slowest < 600.0, format!("{}; slowest run {slowest:.1}s", notes.join(", ")))
}

fn rate_bracket() -> Verdict {
    let fit = harness::rate_sweep(&ExperimentConfig::default()).unwrap();
    verdict(
        (-0.375..=-0.048).contains(&fit.fitted_slope),
        format!(
            "slope {:.4}, 95% CI [{:.4}, {:.4}], theorem {:.4}, ideal {:.4}",
            fit.fitted_slope, fit.slope_ci.0, fit.slope_ci.1, fit.reference_slopes.theorem_rate, fit.reference_slopes.ideal_pw_linear_rate
        ),
    )
}

fn deep_gradient() -> Verdict {
    let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let p = init_deep(&uniform_widths(32, 3), 2, 3, seed, Activation::Tanh).unwrap();
        let target = synthesize_target_with(Domain::CircleFourier, 0.25, 8, 0.1, seed, Parity::All).unwrap();
        let g = deep::grad_w_loss(&p, &target, &grid).unwrap();
        let h = 1e-5;
        let w = p.trained().clone();
        let fd = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
            let mut plus = w.clone();
            plus[(i, j)] += h;
            let mut minus = w.clone();
            minus[(i, j)] -= h;
            let lp = deep::deep_loss(&p.with_trained(plus).unwrap(), &target, &grid).unwrap();
            let lm = deep::deep_loss(&p.with_trained(minus).unwrap(), &target, &grid).unwrap();
            (lp - lm) / (2.0 * h)
        });
        worst = worst.max((&g - fd).amax() / g.amax());
    }
    verdict(worst < 1e-5, format!("max relative error {worst:.2e} over 20 networks"))
}

fn gp_recursion() -> Verdict {
    let t: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
    let table = deep::gp_recursion(Activation::Tanh, &t, 4, deep::GH_ORDER).unwrap();
    let mut rng = ntkgd::rng::stream(9, "gp-monte-carlo");
    let n = 1_000_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.tanh().powi(2)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let z_score = (table.diagonal[1] - mean).abs() / se;
    let dominated = (1..=4).all(|l| table.sigma[l].iter().all(|&v| v <= table.diagonal[l] * (1.0 + 1e-12)));
    verdict(
        z_score < 3.0 && dominated && table.c_sigma > 0.0,
        format!(
            "Σ¹(1) = {:.6} vs MC {mean:.6} ± {se:.1e} ({z_score:.2} SE); Σ^ℓ(t) ≤ Σ^ℓ(1): {dominated}; c_Σ = {:.4}",
            table.diagonal[1], table.c_sigma
        ),
    )
}

fn deep_consistency() -> Verdict {
    let seeds: Vec<u64> = (1..=10).collect();
    let rows = deep::gamma_width_sweep(Activation::Tanh, 3, &[64, 256, 1024], &seeds, 32).unwrap();
    let medians: Vec<f64> = rows.iter().map(|r| r.median_sup_diff).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let thetas = holder_points(Domain::CircleFourier, 32);
    let worst_psd = [64, 256, 1024]
        .iter()
        .map(|&m| gamma_psd_ratio(&init_deep(&uniform_widths(m, 3), 2, 3, 1, Activation::Tanh).unwrap(), &thetas).unwrap())
        .fold(f64::INFINITY, f64::min);
    verdict(
        decreasing && worst_psd >= -1e-8,
        format!("medians {:?}, smallest λ_min/λ_max {worst_psd:.2e}", medians.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>()),
    )
}

fn holder_perturbation() -> Verdict {
    let radii: Vec<f64> = (0..8).map(|i| 0.01 * 30f64.powf(i as f64 / 7.0)).collect();
    let seeds: Vec<u64> = (1..=10).collect();
    let s = 0.25;
    let table =
        deep::holder_perturbation_experiment(Activation::Tanh, 3, 256, &radii, &seeds, s + 0.05, HolderSampling::default()).unwrap();
    let slope = table.fit.slope;
    verdict(
        slope <= 1.0 && slope >= (1.0 - s) - 0.25,
        format!("slope {slope:.4} (r² {:.4}), required [{:.2}, 1.00]", table.fit.r_squared, (1.0 - s) - 0.25),
    )
}

fn quick_configs() -> Vec<(ExperimentKind, &'static str)> {
    vec![
        (ExperimentKind::TrainShallow, "seeds = [1, 2]\n[model]\nm = 256\n[numerics]\ngrid = 512\nmodes = 128\ntarget_modes = 64\n"),
        (ExperimentKind::TrainDeep, "[model]\nm = 32\n[numerics]\ngrid = 64\nmodes = 16\ntarget_modes = 8\n[schedule]\nmax_steps = 50\n"),
        (ExperimentKind::NtkEigen, "[numerics]\ngrid = 200\neigen_count = 5\n"),
        (ExperimentKind::NtkConcentration, "[sweep]\nm_list = [64, 128, 256]\ntrials = 3\n"),
        (ExperimentKind::NtkConcentration, "[model]\nnetwork = \"deep\"\n[sweep]\nm_list = [16, 32]\ntrials = 2\n[numerics]\nholder_grid = 8\n"),
        (ExperimentKind::NtkPerturbation, "[model]\nm = 256\n[sweep]\ntrials = 3\n"),
        (ExperimentKind::NtkPerturbation, "[model]\nnetwork = \"deep\"\nm = 16\n[sweep]\ntrials = 2\nradii = [0.01, 0.1]\n[numerics]\nholder_grid = 9\n"),
        (ExperimentKind::GroenwallCheck, "[sweep]\ndraws = 50\nsteps = 100\n"),
        (ExperimentKind::RateSweep, "seeds = [1, 2, 3]\n[sweep]\nm_list = [64, 128, 256, 512]\nbootstrap = 50\n[numerics]\ngrid = 512\nmodes = 128\ntarget_modes = 64\n"),
        (ExperimentKind::GpTable, "[numerics]\ngrid = 21\n"),
    ]
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let (mut compared, mut differing) = (0usize, Vec::new());
    for (kind, text) in quick_configs() {
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        for format in [Format::Csv, Format::Json] {
            let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            // rate-sweep fails its bracket at these tiny widths; outputs still compare
            let _ = harness::run(kind, &cfg, a.path(), format).unwrap();
            let _ = harness::run(kind, &cfg, b.path(), format).unwrap();
            let (fa, fb) = (read_all(a.path()), read_all(b.path()));
            compared += fa.len();
            if fa != fb {
                differing.push(format!("{kind} {format:?}"));
            }
        }
    }
    verdict(differing.is_empty(), format!("{compared} files compared, differing: {differing:?}"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("eigenstructure", eigenstructure),
        ("coercivity", coercivity),
        ("NTK concentration", concentration),
        ("weight-distance inequality", weight_distance),
        ("Grönwall sequence bound", groenwall),
        ("shallow convergence", shallow_convergence),
        ("rate sweep bracket", rate_bracket),
        ("deep gradient exactness", deep_gradient),
        ("GP recursion", gp_recursion),
        ("deep NTK consistency", deep_consistency),
        ("Hölder perturbation scaling", holder_perturbation),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {:>2} {:<28} {}  {}", i + 1, name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
