mod cache;
mod render;

use anyhow::{anyhow, bail, Context, Result};
use cache::{cache_key, file_digest, write_atomic, Cache};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use confdimlab::closed_forms::{
    building_confdim, elementary_exponent, elementary_exponent_interval, polygonal_bound,
    ClosedFormError,
};
use confdimlab::cocycle::{
    build_shell_complex, cocycle_energy, separation_witness, CircleFunction, CocycleError,
    Constant, Sine,
};
use confdimlab::confdim::{estimate_confdim, ConfdimError, ModulusSeries};
use confdimlab::coxeter::{coxeter_global_bound, coxeter_local_bound, CoxeterError, CoxeterGraph};
use confdimlab::holder::{build_holder, HolderError};
use confdimlab::metric::{FiniteMetricSpace, MetricError, SetCollection};
use confdimlab::modulus::{
    modulus_sweep, solve_modulus, FamilyRecipe, ModulusError, SpaceSource, SweepRow,
};
use confdimlab::VERSION;
use render::{render, Format, Payload, Table};
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

const EXIT_FAILURE: u8 = 1;
const EXIT_PRECONDITION: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "confdimlab",
    version,
    about = "Combinatorial modulus, conformal dimension estimates and polygonal-complex exponent bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Result cache directory (overrides CONFDIMLAB_CACHE).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Critical exponent 1 + ln(k−1)/ln(m−1) of the regular elementary complex.
    Elementary {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
    },
    /// Exponent interval for perimeters in [2m1, 2m2] and thicknesses in [k1, k2].
    Interval {
        #[arg(long)]
        m1: u64,
        #[arg(long)]
        m2: u64,
        #[arg(long)]
        k1: u64,
        #[arg(long)]
        k2: u64,
    },
    /// Conformal dimension of the Fuchsian building boundary.
    Building {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        l: u64,
    },
    /// Upper bounds for a Coxeter group from its defining graph.
    Coxeter(CoxeterArgs),
    /// Upper bounds for polygonal complexes.
    Polygonal {
        /// Minimal perimeter.
        #[arg(long)]
        n: u64,
        /// Maximal thickness.
        #[arg(long)]
        k: u64,
        /// Links contain no 3-circuit.
        #[arg(long)]
        triangle_free: bool,
        /// Links are 1-skeleta of the k-cube.
        #[arg(long)]
        cube_link: bool,
    },
    /// Combinatorial p-modulus of a curve family on an approximation graph.
    Modulus {
        /// grid, carpet or file:PATH
        #[arg(long)]
        space: SpaceSource,
        #[arg(long)]
        level: u32,
        #[arg(long)]
        p: f64,
        /// crossing:SIDE1,SIDE2 or large
        #[arg(long, default_value = "crossing:left,right")]
        family: FamilyRecipe,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Critical exponent of modulus decay across levels.
    Confdim {
        #[arg(long)]
        space: SpaceSource,
        /// Inclusive level range A..B.
        #[arg(long)]
        levels: LevelRange,
        #[arg(long)]
        plo: f64,
        #[arg(long)]
        phi: f64,
        #[arg(long, default_value = "crossing:left,right")]
        family: FamilyRecipe,
        #[arg(long, default_value_t = confdimlab::confdim::DEFAULT_EPS_RATE)]
        eps_rate: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = confdimlab::confdim::MAX_REFINEMENTS)]
        refinements: usize,
    },
    /// Modulus table over levels and exponents.
    Sweep {
        #[arg(long)]
        space: SpaceSource,
        #[arg(long)]
        levels: LevelRange,
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value = "crossing:left,right")]
        family: FamilyRecipe,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Hölder function constant on each set and separating two points.
    Holder {
        /// Metric space JSON file.
        #[arg(long)]
        space: PathBuf,
        /// Set collection JSON file.
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        z1: usize,
        #[arg(long)]
        z2: usize,
    },
    /// Shell energies of the ℓp cocycle u∘φ∘r on Y_{m,k}.
    Cocycle {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        depth: u32,
        #[arg(long, value_enum, default_value_t = CircleFn::Sin)]
        function: CircleFn,
        /// Two arcs I,J of the last shell to separate with a bump.
        #[arg(long)]
        arcs: Option<ArcPair>,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["global", "local"])))]
struct CoxeterArgs {
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    global: bool,
    #[arg(long)]
    local: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CircleFn {
    Sin,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LevelRange {
    start: u32,
    end: u32,
}

impl LevelRange {
    fn levels(self) -> Vec<u32> {
        (self.start..=self.end).collect()
    }
}

impl FromStr for LevelRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..=")
            .or_else(|| s.split_once(".."))
            .ok_or_else(|| format!("expected A..B, got '{s}'"))?;
        let start = a.trim().parse().map_err(|_| format!("bad level '{a}'"))?;
        let end = b.trim().parse().map_err(|_| format!("bad level '{b}'"))?;
        if end < start {
            return Err(format!("empty level range {start}..{end}"));
        }
        Ok(Self { start, end })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ArcPair(u64, u64);

impl FromStr for ArcPair {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected I,J, got '{s}'"))?;
        let parse = |x: &str| x.trim().parse().map_err(|_| format!("bad arc '{x}'"));
        Ok(Self(parse(a)?, parse(b)?))
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Elementary { .. } => "elementary",
            Command::Interval { .. } => "interval",
            Command::Building { .. } => "building",
            Command::Coxeter(_) => "coxeter",
            Command::Polygonal { .. } => "polygonal",
            Command::Modulus { .. } => "modulus",
            Command::Confdim { .. } => "confdim",
            Command::Sweep { .. } => "sweep",
            Command::Holder { .. } => "holder",
            Command::Cocycle { .. } => "cocycle",
        }
    }

    /// Everything that determines the output; input files enter by digest.
    fn params(&self, format: Format, seed: u64) -> Result<Value> {
        let space_params = |space: &SpaceSource| -> Result<Value> {
            Ok(match space {
                SpaceSource::File(path) => json!({"tag": space.tag(), "sha256": file_digest(path)?}),
                other => json!({"tag": other.tag()}),
            })
        };
        let mut params = match self {
            Command::Elementary { m, k } => json!({"m": m, "k": k}),
            Command::Interval { m1, m2, k1, k2 } => json!({"m1": m1, "m2": m2, "k1": k1, "k2": k2}),
            Command::Building { m, k, l } => json!({"m": m, "k": k, "l": l}),
            Command::Coxeter(a) => json!({
                "file_sha256": file_digest(&a.file)?,
                "mode": if a.global { "global" } else { "local" },
            }),
            Command::Polygonal { n, k, triangle_free, cube_link } => json!({
                "n": n, "k": k, "triangle_free": triangle_free, "cube_link": cube_link,
            }),
            Command::Modulus { space, level, p, family, tol } => json!({
                "space": space_params(space)?, "level": level, "p": p,
                "family": family.to_string(), "tol": tol,
            }),
            Command::Confdim { space, levels, plo, phi, family, eps_rate, tol, refinements } => json!({
                "space": space_params(space)?, "levels": levels.levels(), "plo": plo, "phi": phi,
                "family": family.to_string(), "eps_rate": eps_rate, "tol": tol,
                "refinements": refinements,
            }),
            Command::Sweep { space, levels, p, family, tol } => json!({
                "space": space_params(space)?, "levels": levels.levels(), "p": p,
                "family": family.to_string(), "tol": tol,
            }),
            Command::Holder { space, sets, alpha, z1, z2 } => json!({
                "space_sha256": file_digest(space)?, "sets_sha256": file_digest(sets)?,
                "alpha": alpha, "z1": z1, "z2": z2,
            }),
            Command::Cocycle { m, k, p, depth, function, arcs } => json!({
                "m": m, "k": k, "p": p, "depth": depth,
                "function": format!("{function:?}").to_lowercase(),
                "arcs": arcs.map(|a| [a.0, a.1]),
            }),
        };
        params["format"] = json!(format.name());
        params["seed"] = json!(seed);
        Ok(params)
    }

    fn run(&self, seed: u64) -> Result<Payload> {
        let plain = |json: Value| Payload { json, table: None };
        match self {
            Command::Elementary { m, k } => Ok(plain(json!({
                "m": m, "k": k, "value": elementary_exponent(*m, *k)?,
            }))),
            Command::Interval { m1, m2, k1, k2 } => {
                let (low, high) = elementary_exponent_interval(*m1, *m2, *k1, *k2)?;
                Ok(plain(json!({
                    "m1": m1, "m2": m2, "k1": k1, "k2": k2, "low": low, "high": high,
                })))
            }
            Command::Building { m, k, l } => {
                let sol = building_confdim(*m, *k, *l)?;
                Ok(plain(json!({
                    "m": m, "k": k, "l": l, "value": sol.confdim, "x": sol.x,
                    "residual": sol.residual,
                })))
            }
            Command::Coxeter(a) => {
                let graph = CoxeterGraph::load(&a.file)?;
                let report = if a.global {
                    coxeter_global_bound(&graph)?
                } else {
                    coxeter_local_bound(&graph)?
                };
                let mut json = serde_json::to_value(&report)?;
                json["mode"] = json!(if a.global { "global" } else { "local" });
                Ok(plain(json))
            }
            Command::Polygonal { n, k, triangle_free, cube_link } => {
                let report = polygonal_bound(*n, *k, *triangle_free, cube_link.then_some(*k))?;
                Ok(plain(serde_json::to_value(&report)?))
            }
            Command::Modulus { space, level, p, family, tol } => {
                let graph = space.graph(*level)?;
                let spec = family.instantiate(&graph);
                let result = solve_modulus(&graph, &spec, *p, *tol)?;
                let mut json = result.to_json();
                json["space"] = json!(space.tag());
                json["level"] = json!(level);
                json["family"] = json!(family.to_string());
                json["tol"] = json!(tol);
                let row = SweepRow {
                    space: space.tag(),
                    k: *level,
                    p: *p,
                    family: family.to_string(),
                    value: Some(result.value),
                    iterations: result.iterations,
                    converged: true,
                    rho_max: Some(result.rho_star.max()),
                    error: None,
                };
                Ok(Payload {
                    json,
                    table: Some(sweep_table(&[row])),
                })
            }
            Command::Confdim { space, levels, plo, phi, family, eps_rate, tol, refinements } => {
                let series = ModulusSeries::new(space, &levels.levels(), *family, *tol)?;
                let est = estimate_confdim(&series, *plo, *phi, *eps_rate, *refinements)?;
                let mut table = Table::new(&["p", "k", "value", "rate", "decaying"]);
                for s in &est.per_p {
                    for &(k, v) in &s.series.entries {
                        table.push(vec![
                            s.p.to_string(),
                            k.to_string(),
                            v.to_string(),
                            s.rate.to_string(),
                            s.decaying.to_string(),
                        ]);
                    }
                }
                let mut json = serde_json::to_value(&est)?;
                json["space"] = json!(space.tag());
                json["family"] = json!(family.to_string());
                json["levels"] = json!(levels.levels());
                Ok(Payload {
                    json,
                    table: Some(table),
                })
            }
            Command::Sweep { space, levels, p, family, tol } => {
                let rows = modulus_sweep(space, &levels.levels(), p, *family, *tol)?;
                let json_rows: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "space": r.space, "k": r.k, "p": r.p, "family": r.family,
                            "value": r.value, "iterations": r.iterations,
                            "converged": r.converged, "error": r.error,
                        })
                    })
                    .collect();
                Ok(Payload {
                    json: json!({"rows": json_rows}),
                    table: Some(sweep_table(&rows)),
                })
            }
            Command::Holder { space, sets, alpha, z1, z2 } => {
                let metric = FiniteMetricSpace::load(space)?;
                let collection = SetCollection::load(&metric, sets)?;
                let outcome = build_holder(&metric, &collection, *alpha, *z1, *z2, seed)?;
                let mut table = Table::new(&["point", "u"]);
                for (i, u) in outcome.u.iter().enumerate() {
                    table.push(vec![i.to_string(), u.to_string()]);
                }
                let mut json = serde_json::to_value(&outcome)?;
                json["passes"] = json!(outcome.certificate.passes());
                Ok(Payload {
                    json,
                    table: Some(table),
                })
            }
            Command::Cocycle { m, k, p, depth, function, arcs } => {
                let sc = build_shell_complex(*m, *k, *depth)?;
                let u: Box<dyn CircleFunction> = match function {
                    CircleFn::Sin => Box::new(Sine::default()),
                    CircleFn::Constant => Box::new(Constant(1.0)),
                };
                let report = cocycle_energy(u.as_ref(), &sc, *p)?;
                let mut table = Table::new(&["shell", "planar_edges", "energy", "ratio"]);
                for (n, e) in report.energies.iter().enumerate() {
                    let ratio = n
                        .checked_sub(1)
                        .and_then(|i| report.ratios[i])
                        .map_or(String::new(), |r| r.to_string());
                    table.push(vec![
                        n.to_string(),
                        sc.planar_count(n as u32).to_string(),
                        e.to_string(),
                        ratio,
                    ]);
                }
                let mut json = report.to_json();
                json["depth"] = json!(depth);
                json["function"] = u.describe();
                if let Some(ArcPair(a, b)) = arcs {
                    json["separation"] = serde_json::to_value(separation_witness(&sc, *a, *b)?)?;
                }
                Ok(Payload {
                    json,
                    table: Some(table),
                })
            }
        }
    }
}

fn sweep_table(rows: &[SweepRow]) -> Table {
    let header: Vec<&str> = SweepRow::csv_header().split(',').collect();
    let mut table = Table::new(&header);
    for r in rows {
        table.push(r.csv_fields());
    }
    table
}

/// Exit code and machine-readable kind for a failed command.
fn classify(err: &anyhow::Error) -> (u8, &'static str, Option<Value>) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ModulusError>() {
            return match e {
                ModulusError::NoConvergence { lower, upper, .. } => (
                    EXIT_NO_CONVERGENCE,
                    "no_convergence",
                    Some(json!({"lower": lower, "upper": upper})),
                ),
                _ => (EXIT_PRECONDITION, "precondition", None),
            };
        }
        if let Some(e) = cause.downcast_ref::<ClosedFormError>() {
            return match e {
                ClosedFormError::NoRoot { .. } => (EXIT_NO_CONVERGENCE, "no_convergence", None),
                ClosedFormError::Inapplicable(_) => (EXIT_PRECONDITION, "hypothesis", None),
                _ => (EXIT_PRECONDITION, "precondition", None),
            };
        }
        if let Some(e) = cause.downcast_ref::<CoxeterError>() {
            return match e {
                CoxeterError::Inapplicable(report) => (
                    EXIT_PRECONDITION,
                    "hypothesis",
                    serde_json::to_value(report.as_ref()).ok(),
                ),
                _ => (EXIT_PRECONDITION, "precondition", None),
            };
        }
        if let Some(e) = cause.downcast_ref::<HolderError>() {
            return match e {
                HolderError::RetryExhausted(_) => (EXIT_NO_CONVERGENCE, "no_convergence", None),
                _ => (EXIT_PRECONDITION, "precondition", None),
            };
        }
        if let Some(e) = cause.downcast_ref::<ConfdimError>() {
            match e {
                // the solver error underneath decides
                ConfdimError::Modulus { .. } => continue,
                ConfdimError::Inconclusive { offending } => {
                    return (
                        EXIT_PRECONDITION,
                        "inconclusive",
                        Some(json!({"offending": offending})),
                    )
                }
                _ => return (EXIT_PRECONDITION, "precondition", None),
            }
        }
        if cause.downcast_ref::<CocycleError>().is_some()
            || cause.downcast_ref::<MetricError>().is_some()
            || cause.downcast_ref::<confdimlab::approx::ApproxError>().is_some()
        {
            return (EXIT_PRECONDITION, "precondition", None);
        }
    }
    (EXIT_FAILURE, "error", None)
}

fn emit(bytes: &[u8], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<u8>> {
    let params = cli.command.params(cli.format, cli.seed)?;
    let key = cache_key(cli.command.name(), &params, VERSION);
    let cache = Cache::from_options(cli.cache_dir.clone());
    if let Some(hit) = cache.as_ref().and_then(|c| c.get(&key)) {
        return Ok(hit);
    }
    let mut payload = cli.command.run(cli.seed)?;
    let Value::Object(map) = &mut payload.json else {
        bail!("internal error: payload is not an object");
    };
    map.insert("command".into(), json!(cli.command.name()));
    map.insert("version".into(), json!(VERSION));
    let bytes = render(&payload, cli.format).into_bytes();
    if let Some(cache) = &cache {
        cache
            .put(&key, &bytes)
            .with_context(|| anyhow!("writing cache entry {key}"))?;
    }
    Ok(bytes)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli).and_then(|bytes| emit(&bytes, cli.out.as_ref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind, details) = classify(&err);
            let reason = err
                .chain()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(": ");
            let mut body = json!({
                "command": cli.command.name(),
                "error": kind,
                "reason": reason,
                "exit_code": code,
                "version": VERSION,
            });
            if let Some(d) = details {
                body["details"] = d;
            }
            println!("{}", serde_json::to_string_pretty(&body).expect("JSON values serialize"));
            eprintln!("error: {reason}");
            ExitCode::from(code)
        }
    }
}
