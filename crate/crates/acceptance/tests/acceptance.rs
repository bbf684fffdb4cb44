//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/support/holder_instances.rs"]
mod holder_instances;
#[path = "../../core/tests/support/modulus_corpus.rs"]
mod modulus_corpus;

use confdimlab::approx::Side;
use confdimlab::closed_forms::{
    building_confdim, building_equation, building_symmetric_x, elementary_exponent,
    polygonal_bound,
};
use confdimlab::cocycle::{
    build_explicit, build_shell_complex, cocycle_energy, df_bound, Sine, Verdict,
};
use confdimlab::confdim::{estimate_confdim, ModulusSeries, SyntheticSeries, DEFAULT_EPS_RATE};
use confdimlab::coxeter::{coxeter_local_bound, CoxeterGraph};
use confdimlab::holder::{build_holder, choose_parameters};
use confdimlab::metric::SetCollectionFile;
use confdimlab::modulus::{
    brute_force_modulus, modulus_sweep, solve_modulus, FamilyRecipe, SpaceSource,
};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($arg)+));
        }
    };
}

type Outcome = Result<String, String>;

/// The CLI binary built alongside this test (`target/<profile>/confdimlab`).
fn confdimlab_binary() -> Result<PathBuf, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let dir = exe.parent().and_then(Path::parent).ok_or("no target directory")?;
    let bin = dir.join(format!("confdimlab{}", std::env::consts::EXE_SUFFIX));
    if bin.is_file() {
        Ok(bin)
    } else {
        Err(format!("{} not built; run the suite with `cargo test --workspace`", bin.display()))
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn closed_forms() -> Outcome {
    check!(elementary_exponent(3, 3).unwrap().to_bits() == 2.0f64.to_bits(), "elementary(3,3) is not 2.0");
    check!(elementary_exponent(3, 2).unwrap().to_bits() == 1.0f64.to_bits(), "elementary(3,2) is not 1.0");
    let g = CoxeterGraph::load(data("k4_m7.json")).map_err(|e| e.to_string())?;
    let local = coxeter_local_bound(&g).map_err(|e| e.to_string())?;
    check!(local.value == Some(1.5), "K4 local bound {:?}", local.value);
    let r = polygonal_bound(10, 3, false, Some(3)).map_err(|e| e.to_string())?;
    let (lo, hi) = r.bracket.ok_or("no cube-link bracket")?;
    let l2 = 2f64.ln();
    let (elo, ehi) = (1.0 + l2 / (7f64.ln() + 15f64.ln()), 1.0 + l2 / 7f64.ln());
    check!((lo - elo).abs() < 1e-12 && (hi - ehi).abs() < 1e-12, "bracket ({lo}, {hi})");
    Ok(format!("bracket ({lo:.6}, {hi:.6})"))
}

fn building() -> Outcome {
    let mut worst_residual: f64 = 0.0;
    let mut worst_symmetric: f64 = 0.0;
    for m in 3..=8 {
        for k in 3..=8 {
            for l in 3..=8 {
                let sol = building_confdim(m, k, l).map_err(|e| e.to_string())?;
                worst_residual = worst_residual.max(building_equation(m, k, l, sol.x).abs());
            }
            let sym = building_confdim(m, k, k).unwrap().x;
            worst_symmetric = worst_symmetric.max((sym - building_symmetric_x(m, k).unwrap()).abs());
        }
    }
    check!(worst_residual < 1e-12, "residual {worst_residual:e}");
    check!(worst_symmetric < 1e-9, "symmetric-case gap {worst_symmetric:e}");
    let mut misses = Vec::new();
    for m in 3..=6 {
        for k in 3..=6 {
            let gap = (building_confdim(m, k, 1_000_000).unwrap().confdim
                - elementary_exponent(m, k).unwrap())
            .abs();
            if gap >= 1e-4 {
                misses.push(format!("({m},{k}) gap {gap:.2e}"));
            }
        }
    }
    check!(misses.is_empty(), "l = 10^6 limit not within 1e-4 for {}", misses.join(", "));
    Ok(format!("max residual {worst_residual:.1e}"))
}

fn cocycle() -> Outcome {
    let sc = build_shell_complex(4, 3, 12).map_err(|e| e.to_string())?;
    sc.verify_counts(1 << 20)?;
    for n in 0..=12 {
        check!(sc.frontier_count(n) == 4 * 3u128.pow(n) * 2u128.pow(n), "count at shell {n}");
    }
    let u = Sine::default();
    let at2 = cocycle_energy(&u, &sc, 2.0).map_err(|e| e.to_string())?;
    for (n, &w) in at2.max_df.iter().enumerate() {
        check!(w <= df_bound(4, n as u32, 1.0), "|df| bound fails at shell {n}");
    }
    let rel = (at2.fitted_ratio / at2.predicted_ratio - 1.0).abs();
    check!(rel < 0.03, "fitted ratio {} vs {}", at2.fitted_ratio, at2.predicted_ratio);
    let low = cocycle_energy(&u, &sc, 1.38).map_err(|e| e.to_string())?.verdict;
    let high = cocycle_energy(&u, &sc, 1.88).map_err(|e| e.to_string())?.verdict;
    check!(low == Verdict::Diverges, "verdict at 1.38: {low:?}");
    check!(high == Verdict::Converges, "verdict at 1.88: {high:?}");
    let small = build_shell_complex(4, 3, 3).unwrap();
    let ex = build_explicit(4, 3, 3).map_err(|e| e.to_string())?;
    let r = cocycle_energy(&u, &small, 2.0).unwrap();
    for n in 0..=3 {
        check!(ex.black_edges(n).count() as u128 == small.frontier_count(n), "explicit count at shell {n}");
        let e = ex.shell_energy(&u, n, 2.0);
        check!((e - r.energies[n as usize]).abs() <= 1e-12 * r.energies[n as usize], "explicit energy at shell {n}");
    }
    Ok(format!("fitted ratio {:.4} (predicted {:.4})", at2.fitted_ratio, at2.predicted_ratio))
}

fn holder() -> Outcome {
    let alphas = [0.3, 0.5, 0.7];
    let mut slowest = Duration::ZERO;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let alpha = alphas[seed as usize % 3];
        let inst = holder_instances::instance(seed, alpha);
        check!(inst.space.len() <= holder_instances::MAX_POINTS, "instance {seed} too large");
        check!((10..=40).contains(&inst.sets.len()), "instance {seed} has {} sets", inst.sets.len());
        check!(choose_parameters(alpha, inst.separation).is_ok(), "instance {seed} under-separated");
        let start = Instant::now();
        let out = build_holder(&inst.space, &inst.sets, alpha, inst.z1, inst.z2, seed)
            .map_err(|e| format!("instance {seed}: {e}"))?;
        slowest = slowest.max(start.elapsed());
        let cert = &out.certificate;
        check!(cert.passes(), "instance {seed} (alpha {alpha}) certificate fails");
        worst = worst.max(cert.holder_seminorm / cert.bound);
    }
    check!(slowest < Duration::from_secs(30), "slowest instance {slowest:?}");
    Ok(format!("100 certificates, max seminorm/bound {worst:.3}, slowest {:.2} s", slowest.as_secs_f64()))
}

fn modulus() -> Outcome {
    let corpus = modulus_corpus::corpus();
    check!(corpus.len() == 25, "corpus has {} graphs", corpus.len());
    let mut worst: f64 = 0.0;
    for (name, g, f) in &corpus {
        check!(g.len() <= 10, "{name} too large");
        for p in [1.5, 2.0, 3.0] {
            let solved = solve_modulus(g, f, p, 1e-7).map_err(|e| format!("{name}: {e}"))?;
            let oracle = brute_force_modulus(g, f, p).map_err(|e| format!("{name} oracle: {e}"))?;
            let rel = (solved.value - oracle.value).abs() / oracle.value;
            check!(rel <= 1e-5, "{name} p={p}: {} vs {}", solved.value, oracle.value);
            worst = worst.max(rel);
        }
    }
    for n in 1..=12 {
        let (g, f) = modulus_corpus::path(n);
        for p in [1.5, 2.0, 3.0] {
            let v = solve_modulus(&g, &f, p, 1e-9).map_err(|e| e.to_string())?.value;
            let exact = (n as f64).powf(1.0 - p);
            check!((v - exact).abs() <= 1e-8 * exact, "path {n} p={p}: {v}");
        }
    }
    let runner = || {
        let config = Config {
            cases: 48,
            failure_persistence: None,
            ..Config::default()
        };
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
    };
    let graphs = (modulus_corpus::random_graph(), 1.2f64..4.0);
    runner()
        .run(&graphs, |((n, e), p)| modulus_corpus::check_admissible(n, &e, p))
        .map_err(|e| format!("admissibility: {e}"))?;
    runner()
        .run(&graphs, |((n, e), p)| modulus_corpus::check_monotone(n, &e, p))
        .map_err(|e| format!("monotonicity: {e}"))?;
    runner()
        .run(&graphs, |((n, e), p)| modulus_corpus::check_subadditive(n, &e, p))
        .map_err(|e| format!("subadditivity: {e}"))?;
    runner()
        .run(&(modulus_corpus::nested_families(), 1.2f64..4.0), |((s, l), p)| {
            modulus_corpus::check_overflow(s, l, p)
        })
        .map_err(|e| format!("overflow: {e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn confdim() -> Outcome {
    let crossing = FamilyRecipe::Crossing(Side::Left, Side::Right);
    let levels: Vec<u32> = (1..=6).collect();
    let grid = ModulusSeries::new(&SpaceSource::Grid, &levels, crossing, 1e-4).map_err(|e| e.to_string())?;
    let square = estimate_confdim(&grid, 1.5, 3.0, DEFAULT_EPS_RATE, 12).map_err(|e| e.to_string())?;
    check!((1.8..=2.2).contains(&square.p_star), "square p_star {}", square.p_star);
    let planted = SyntheticSeries::new(1.5, (1..=6).collect());
    let est = estimate_confdim(&planted, 1.1, 2.5, DEFAULT_EPS_RATE, 12).map_err(|e| e.to_string())?;
    let width = est.bracket.1 - est.bracket.0;
    check!((est.p_star - 1.5).abs() < 0.05 && width < 0.05, "planted p_star {} width {width}", est.p_star);
    let rows = modulus_sweep(&SpaceSource::Carpet, &[1, 2, 3, 4, 5], &[3.0], crossing, 1e-3)
        .map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for r in &rows {
        values.push(r.value.ok_or_else(|| format!("carpet level {}: {:?}", r.k, r.error))?);
    }
    check!(values.windows(2).all(|w| w[1] < w[0]), "carpet values not decreasing: {values:?}");
    Ok(format!(
        "square p_star {:.4}, planted {:.4}, carpet p=3 {}",
        square.p_star,
        est.p_star,
        values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" > ")
    ))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("confdimlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let inst = holder_instances::instance(11, 0.5);
    let space = dir.join("space.json");
    let sets = dir.join("sets.json");
    let write = |path: &Path, text: String| std::fs::write(path, text).map_err(|e| e.to_string());
    write(&space, serde_json::to_string(&inst.space.to_file()).unwrap())?;
    let file = SetCollectionFile {
        sets: inst.sets.sets().to_vec(),
    };
    write(&sets, serde_json::to_string(&file).unwrap())?;
    let (z1, z2) = (inst.z1.to_string(), inst.z2.to_string());
    let cox = data("k4_m7.json");
    let cox = cox.to_str().unwrap();
    let s = |x: &Path| x.to_str().unwrap().to_string();
    let commands: Vec<Vec<String>> = [
        vec!["elementary", "--m", "5", "--k", "4"],
        vec!["interval", "--m1", "3", "--m2", "5", "--k1", "3", "--k2", "4"],
        vec!["building", "--m", "4", "--k", "3", "--l", "7"],
        vec!["coxeter", "--file", cox, "--local"],
        vec!["coxeter", "--file", cox, "--global"],
        vec!["polygonal", "--n", "10", "--k", "3", "--cube-link"],
        vec!["modulus", "--space", "carpet", "--level", "3", "--p", "2.5"],
        vec!["confdim", "--space", "grid", "--levels", "1..4", "--plo", "1.5", "--phi", "3", "--refinements", "4"],
        vec!["sweep", "--space", "carpet", "--levels", "1..3", "--p", "1.5,2,3", "--format", "csv"],
        vec!["holder", "--space", &s(&space), "--sets", &s(&sets), "--alpha", "0.5", "--z1", &z1, "--z2", &z2],
        vec!["cocycle", "--m", "4", "--k", "3", "--p", "2", "--depth", "10", "--arcs", "3,17", "--format", "text"],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    let cache = dir.join("cache");
    let bin = confdimlab_binary()?;
    let run = |args: &[String], cached: bool| {
        let mut c = Command::new(&bin);
        c.env_remove("CONFDIMLAB_CACHE").args(args);
        if cached {
            c.arg("--cache-dir").arg(&cache);
        }
        c.output().map_err(|e| e.to_string())
    };
    for args in &commands {
        let first = run(args, false)?;
        check!(first.status.success(), "{} failed: {}", args[0], String::from_utf8_lossy(&first.stdout));
        let second = run(args, false)?;
        check!(first.stdout == second.stdout, "{} differs between runs", args.join(" "));
        let cold = run(args, true)?;
        let hot = run(args, true)?;
        check!(cold.stdout == first.stdout && hot.stdout == first.stdout, "{} differs through the cache", args[0]);
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} invocations byte-identical across repeats and cache hits", commands.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("closed forms", closed_forms, Duration::from_secs(1)),
        ("building equation", building, Duration::from_secs(5)),
        ("cocycle threshold", cocycle, Duration::from_secs(120)),
        ("hölder builder", holder, Duration::from_secs(3000)),
        ("modulus solver", modulus, Duration::from_secs(120)),
        ("conformal-dimension estimator", confdim, Duration::from_secs(300)),
        ("determinism", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *limit => Err(format!("{detail}; took {elapsed:?}, limit {limit:?}")),
            other => other,
        };
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.2} s] {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.2} s] {reason}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
