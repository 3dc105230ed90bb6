use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use llrp_core::engine::{CrossoverKind, MutationMode, Oscillation, ParentSelection, VndOrder};
use llrp_core::harness::{self, write_atomic};
use llrp_core::instance::{parse_instance, read_manifest, RawMetadata};
use llrp_core::solution::{Solution, SolutionFile};
use llrp_core::{AblationPreset, Error, Instance, InstanceFormat, SearchConfig};

/// Environment variable that, when set, replaces the seed given on the
/// command line.
const SEED_ENV: &str = "LLRP_SEED";

#[derive(Parser, Debug)]
#[command(name = "llrp", version, about = "Latency location routing solver")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch commands.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wall-clock limit per run, in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Generation limit per run.
    #[arg(long, global = true)]
    generations: Option<usize>,
    /// Output file (or file prefix for analyze-edges).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with search parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct InstanceArgs {
    /// Instance file.
    instance: PathBuf,
    /// canonical, tuzun, prodhon or barreto.
    #[arg(long, default_value = "canonical")]
    format: String,
    /// Fleet size, required for raw formats.
    #[arg(long)]
    vehicles: Option<usize>,
    /// Maximum open depots, required for raw formats.
    #[arg(long)]
    max_depots: Option<usize>,
    /// Instance name for raw formats (defaults to the file stem).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct VariantArgs {
    /// rlhea or one of its ablations rlhea1 … rlhea6.
    #[arg(long, value_parser = parse_with::<AblationPreset>)]
    preset: Option<AblationPreset>,
    #[arg(long, value_parser = parse_with::<CrossoverKind>)]
    crossover: Option<CrossoverKind>,
    #[arg(long, value_parser = parse_with::<VndOrder>)]
    vnd_order: Option<VndOrder>,
    #[arg(long, value_parser = parse_with::<Oscillation>)]
    oscillation: Option<Oscillation>,
    #[arg(long, value_parser = parse_with::<ParentSelection>)]
    parent_selection: Option<ParentSelection>,
    #[arg(long, value_parser = parse_with::<MutationMode>)]
    mutation_mode: Option<MutationMode>,
    /// Population size.
    #[arg(long)]
    population: Option<usize>,
    /// Candidate list length.
    #[arg(long)]
    delta: Option<usize>,
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance and write the solution file.
    Solve {
        #[command(flatten)]
        inst: InstanceArgs,
        #[command(flatten)]
        variant: VariantArgs,
        /// Write the final Q and R tables as CSV.
        #[arg(long)]
        dump_q: Option<PathBuf>,
        /// Write the final population as CSV.
        #[arg(long)]
        dump_population: Option<PathBuf>,
    },
    /// Run every instance of a manifest several times and write a report.
    Bench {
        /// Manifest CSV.
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[command(flatten)]
        variant: VariantArgs,
        /// Leave the timing column empty.
        #[arg(long)]
        omit_timing: bool,
    },
    /// Time-to-target experiment.
    Ttt {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Seconds allowed per run.
        #[arg(long)]
        budget: f64,
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Check a solution file against an instance.
    Validate {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Solution file.
        solution: PathBuf,
    },
    /// Count arcs shared between the solutions in a directory.
    AnalyzeEdges {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Directory of `.sol` files.
        dir: PathBuf,
    },
    /// Rewrite a raw benchmark file in the canonical format.
    Convert {
        #[command(flatten)]
        inst: InstanceArgs,
    },
}

enum Failure {
    Validation,
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn seed(cli: &Cli) -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        _ => Ok(cli.seed),
    }
}

fn build_config(cli: &Cli, variant: &VariantArgs) -> Result<SearchConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => SearchConfig::from_toml(&fs::read_to_string(p)?)?,
        None => SearchConfig::default(),
    };
    if let Some(p) = variant.preset {
        p.apply(&mut cfg);
    }
    if let Some(v) = variant.crossover {
        cfg.crossover = v;
    }
    if let Some(v) = variant.vnd_order {
        cfg.vnd_order = v;
    }
    if let Some(v) = variant.oscillation {
        cfg.oscillation = v;
    }
    if let Some(v) = variant.parent_selection {
        cfg.parent_selection = v;
    }
    if let Some(v) = variant.mutation_mode {
        cfg.mutation_mode = v;
    }
    if let Some(v) = variant.population {
        cfg.population_size = v;
    }
    if let Some(v) = variant.delta {
        cfg.delta = v;
    }
    if let Some(s) = seed(cli)? {
        cfg.seed = s;
    }
    if let Some(t) = cli.time_limit {
        cfg.time_limit = Some(t);
    }
    if let Some(g) = cli.generations {
        cfg.max_generations = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_instance(args: &InstanceArgs, delta: usize) -> Result<Instance, Error> {
    let format: InstanceFormat = args.format.parse()?;
    let meta = if format.is_raw() {
        let name = args.name.clone().unwrap_or_else(|| {
            args.instance
                .file_stem()
                .map_or_else(|| "instance".to_string(), |s| s.to_string_lossy().into_owned())
        });
        match (args.vehicles, args.max_depots) {
            (Some(v), Some(d)) => Some(RawMetadata {
                name,
                n_vehicles: v,
                max_open_depots: d,
                n_customers: None,
                n_depots: None,
            }),
            _ => return Err(Error::MissingMetadata(name)),
        }
    } else {
        None
    };
    parse_instance(&args.instance, format, delta, meta.as_ref())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve {
            inst,
            variant,
            dump_q,
            dump_population,
        } => {
            let cfg = build_config(cli, variant)?;
            let instance = load_instance(inst, cfg.delta)?;
            let res = llrp_core::run(&instance, &cfg)?;
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{}.sol", instance.name())));
            write_atomic(&out, res.best.to_text(&instance).as_bytes())?;
            if let Some(p) = dump_q {
                let mut buf = Vec::new();
                res.model.write_csv(&mut buf)?;
                write_atomic(p, &buf)?;
            }
            if let Some(p) = dump_population {
                let mut buf = Vec::new();
                res.population.write_csv(&mut buf)?;
                write_atomic(p, &buf)?;
            }
            println!(
                "f={:.2} time={:.3} seed={} generations={} best_generation={}",
                res.objective, res.best_time, res.seed, res.generations, res.best_generation
            );
            Ok(())
        }
        Command::Bench {
            manifest,
            runs,
            variant,
            omit_timing,
        } => {
            let cfg = build_config(cli, variant)?;
            let entries = read_manifest(manifest)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let rows = harness::with_threads(cli.threads, || harness::bench(&entries, base, *runs, &cfg))?;
            for r in &rows {
                if let Some(e) = &r.error {
                    log::warn!("{}: {e}", r.name);
                }
            }
            write_or_print(cli.out.as_deref(), &harness::bench_csv(&rows, !omit_timing)?)?;
            Ok(())
        }
        Command::Ttt {
            inst,
            target,
            runs,
            budget,
            variant,
        } => {
            let cfg = build_config(cli, variant)?;
            let instance = load_instance(inst, cfg.delta)?;
            let rows = harness::with_threads(cli.threads, || harness::ttt(&instance, &cfg, *target, *runs, *budget))??;
            write_or_print(cli.out.as_deref(), &harness::ttt_csv(&rows)?)?;
            Ok(())
        }
        Command::Validate { inst, solution } => {
            let instance = load_instance(inst, llrp_core::instance::DEFAULT_DELTA)?;
            let file = SolutionFile::read(solution)?;
            let report = harness::validate_file(&instance, &file);
            print!("{}", report.render());
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Validation)
            }
        }
        Command::AnalyzeEdges { inst, dir } => {
            let instance = load_instance(inst, llrp_core::instance::DEFAULT_DELTA)?;
            let sols: Vec<(String, Solution)> = harness::load_solution_dir(&instance, dir)?;
            let analysis = harness::analyze_edges(&instance, sols)?;
            let prefix = cli.out.clone().unwrap_or_else(|| dir.join("edges"));
            let with_suffix = |s: &str| {
                let mut p = prefix.clone().into_os_string();
                p.push(s);
                PathBuf::from(p)
            };
            let matrix = with_suffix("_matrix.csv");
            let ratio = with_suffix("_ratio.csv");
            write_atomic(&matrix, analysis.matrix_csv()?.as_bytes())?;
            write_atomic(&ratio, analysis.ratio_csv()?.as_bytes())?;
            println!("{}\n{}", matrix.display(), ratio.display());
            Ok(())
        }
        Command::Convert { inst } => {
            let instance = load_instance(inst, llrp_core::instance::DEFAULT_DELTA)?;
            write_or_print(cli.out.as_deref(), &instance.to_canonical())?;
            Ok(())
        }
    }
}
