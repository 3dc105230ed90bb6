//! Batch experiments on top of [`crate::engine::run`]: benchmark tables,
//! time-to-target series, solution validation and shared-arc analysis.
//! Reports are CSV files headed by a `# schema:` line and written
//! atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::engine::{run, RunResult, SearchConfig};
use crate::error::{Error, Result};
use crate::instance::{Instance, ManifestEntry};
use crate::rng::derive_seed;
use crate::solution::{evaluate, Solution, SolutionFile};
use crate::OBJ_EPS;

pub const BENCH_SCHEMA: &str = "# schema: llrp-bench v1";
pub const TTT_SCHEMA: &str = "# schema: llrp-ttt v1";
pub const EDGE_MATRIX_SCHEMA: &str = "# schema: llrp-edge-matrix v1";
pub const EDGE_RATIO_SCHEMA: &str = "# schema: llrp-edge-ratio v1";

/// Allowed gap between a declared and a recomputed objective in `validate`.
pub const VALIDATE_TOL: f64 = 1e-2;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Seeds for `runs` independent runs under one master seed.
pub fn run_seeds(master: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|k| derive_seed(master, k)).collect()
}

/// Runs `job` for each item, in parallel when the `parallel` feature is on.
/// Output order matches input order.
pub fn par_map<T, U, F>(items: &[T], job: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seq_map(items, job)
    }
}

pub fn seq_map<T, U, F>(items: &[T], job: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(job).collect()
}

/// Runs `f` with at most `threads` workers (ignored without `parallel`).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            return Ok(pool.install(f));
        }
        Ok(f())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(f())
    }
}

/// One engine run per seed.
pub fn run_batch(inst: &Instance, cfg: &SearchConfig, seeds: &[u64], parallel: bool) -> Vec<Result<RunResult>> {
    let job = |&seed: &u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        run(inst, &c)
    };
    if parallel {
        par_map(seeds, job)
    } else {
        seq_map(seeds, job)
    }
}

/// Row of a benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub runs: usize,
    pub f_best: Option<f64>,
    pub f_avg: Option<f64>,
    pub t_avg: Option<f64>,
    pub seeds: Vec<u64>,
    pub fingerprint: String,
    pub bks: Option<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    /// Relative gap of `f_best` to the best-known value, in percent.
    pub fn gap(&self) -> Option<f64> {
        match (self.f_best, self.bks) {
            (Some(f), Some(b)) if b != 0.0 => Some(100.0 * (f - b) / b),
            _ => None,
        }
    }
}

/// Aggregates runs on one instance, re-checking every best solution with
/// the independent evaluator.
pub fn bench_row(
    name: &str,
    inst: &Instance,
    cfg: &SearchConfig,
    seeds: &[u64],
    bks: Option<f64>,
    parallel: bool,
) -> BenchRow {
    let mut row = BenchRow {
        name: name.to_string(),
        runs: seeds.len(),
        f_best: None,
        f_avg: None,
        t_avg: None,
        seeds: seeds.to_vec(),
        fingerprint: cfg.fingerprint(),
        bks,
        error: None,
    };
    let results = run_batch(inst, cfg, seeds, parallel);
    let mut fs = Vec::with_capacity(results.len());
    let mut ts = Vec::with_capacity(results.len());
    for (res, seed) in results.into_iter().zip(seeds) {
        let checked = res.and_then(|r| {
            let f = evaluate(&r.best, inst)?;
            if (f - r.objective).abs() > OBJ_EPS {
                return Err(Error::InvalidSolution(format!(
                    "reported objective {} differs from re-evaluated {f}",
                    r.objective
                )));
            }
            Ok((f, r.best_time))
        });
        match checked {
            Ok((f, t)) => {
                fs.push(f);
                ts.push(t);
            }
            Err(e) => {
                row.error = Some(format!("seed {seed}: {e}"));
                return row;
            }
        }
    }
    if !fs.is_empty() {
        row.f_best = fs.iter().copied().reduce(f64::min);
        row.f_avg = Some(fs.iter().sum::<f64>() / fs.len() as f64);
        row.t_avg = Some(ts.iter().sum::<f64>() / ts.len() as f64);
    }
    row
}

/// Runs every manifest entry `runs` times. Seeds are derived from
/// `cfg.seed` and the entry index so rows do not share seeds.
pub fn bench(entries: &[ManifestEntry], base_dir: &Path, runs: usize, cfg: &SearchConfig) -> Vec<BenchRow> {
    entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let seeds = run_seeds(derive_seed(cfg.seed, 1_000_000 + k as u64), runs);
            match e.load(base_dir, cfg.delta) {
                Ok(inst) => bench_row(&e.name, &inst, cfg, &seeds, e.bks, true),
                Err(err) => BenchRow {
                    name: e.name.clone(),
                    runs,
                    f_best: None,
                    f_avg: None,
                    t_avg: None,
                    seeds,
                    fingerprint: cfg.fingerprint(),
                    bks: e.bks,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.digits$}"))
}

/// Serializes a benchmark report. With `timing = false` the `t_avg` column
/// is left empty so reruns compare byte for byte.
pub fn bench_csv(rows: &[BenchRow], timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name", "runs", "f_best", "f_avg", "t_avg", "seeds", "fingerprint", "bks", "gap", "error",
    ])?;
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        w.write_record([
            r.name.clone(),
            r.runs.to_string(),
            opt(r.f_best, 2),
            opt(r.f_avg, 2),
            if timing { opt(r.t_avg, 3) } else { String::new() },
            seeds.join(" "),
            r.fingerprint.clone(),
            opt(r.bks, 2),
            opt(r.gap(), 3),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    finish_csv(BENCH_SCHEMA, w)
}

fn finish_csv(schema: &str, w: csv::Writer<Vec<u8>>) -> Result<String> {
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut out = String::with_capacity(body.len() + schema.len() + 1);
    out.push_str(schema);
    out.push('\n');
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

/// Empirical probability of the `i`-th (1-based) of `runs` sorted times.
pub fn ttt_rho(i: usize, runs: usize) -> f64 {
    (i as f64 - 0.5) / runs as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TttRow {
    pub rank: usize,
    pub seed: u64,
    pub time: f64,
    pub rho: f64,
    pub objective: Option<f64>,
    pub censored: bool,
}

/// Orders `(seed, time, objective, censored)` outcomes by time (seed order
/// on ties) and attaches the plotting probabilities.
pub fn ttt_rows(mut outcomes: Vec<(u64, f64, Option<f64>, bool)>) -> Vec<TttRow> {
    let runs = outcomes.len();
    outcomes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    outcomes
        .into_iter()
        .enumerate()
        .map(|(k, (seed, time, objective, censored))| TttRow {
            rank: k + 1,
            seed,
            time,
            rho: ttt_rho(k + 1, runs),
            objective,
            censored,
        })
        .collect()
}

/// Runs `runs` seeded searches that stop at `target` or after `budget`
/// seconds. Runs that miss the target are kept with `time = budget`.
pub fn ttt(inst: &Instance, cfg: &SearchConfig, target: f64, runs: usize, budget: f64) -> Result<Vec<TttRow>> {
    if target.is_nan() || target <= 0.0 {
        return Err(Error::Config("target must be positive".into()));
    }
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::Config("budget must be non-negative".into()));
    }
    let mut c = cfg.clone();
    c.target = Some(target);
    c.time_limit = Some(budget);
    let seeds = run_seeds(cfg.seed, runs);
    let results = run_batch(inst, &c, &seeds, true);
    let mut outcomes = Vec::with_capacity(runs);
    for (res, &seed) in results.into_iter().zip(&seeds) {
        let r = res?;
        if r.target_reached {
            outcomes.push((seed, r.best_time.min(budget), Some(r.objective), false));
        } else {
            outcomes.push((seed, budget, Some(r.objective), true));
        }
    }
    Ok(ttt_rows(outcomes))
}

pub fn ttt_csv(rows: &[TttRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "seed", "time", "rho", "objective", "censored"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.time),
            format!("{}", r.rho),
            opt(r.objective, 2),
            r.censored.to_string(),
        ])?;
    }
    finish_csv(TTT_SCHEMA, w)
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub recomputed: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(out, "{}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

/// Checks a solution file against an instance without going through
/// [`Solution`], recomputing the objective from the coordinates.
pub fn validate_file(inst: &Instance, file: &SolutionFile) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, pass, detail: String| checks.push(Check { name, pass, detail });

    let mut unknown = Vec::new();
    let mut open = Vec::new();
    for &id in &file.open_depots {
        match inst.depot_by_id(id) {
            Some(d) => open.push(d),
            None => unknown.push(format!("depot {id}")),
        }
    }
    let mut routes = Vec::new();
    for (d, cs) in &file.routes {
        let depot = inst.depot_by_id(*d);
        if depot.is_none() {
            unknown.push(format!("depot {d}"));
        }
        let mut vs = Vec::with_capacity(cs.len());
        for &c in cs {
            match inst.customer_by_id(c) {
                Some(v) => vs.push(v),
                None => unknown.push(format!("customer {c}")),
            }
        }
        routes.push((*d, depot, vs));
    }
    push(
        "ids",
        unknown.is_empty(),
        if unknown.is_empty() {
            "all ids known".into()
        } else {
            format!("unknown {}", unknown.join(", "))
        },
    );

    let mut seen = vec![0usize; inst.n_vertices()];
    for (_, _, vs) in &routes {
        for &v in vs {
            seen[v] += 1;
        }
    }
    let dup: Vec<String> = inst
        .customer_vertices()
        .filter(|&v| seen[v] > 1)
        .map(|v| inst.vertex_id(v).to_string())
        .collect();
    let missing: Vec<String> = inst
        .customer_vertices()
        .filter(|&v| seen[v] == 0)
        .map(|v| inst.vertex_id(v).to_string())
        .collect();
    let mut detail = Vec::new();
    if !dup.is_empty() {
        detail.push(format!("duplicated customer {}", dup.join(" ")));
    }
    if !missing.is_empty() {
        detail.push(format!("missing customer {}", missing.join(" ")));
    }
    push(
        "customers",
        detail.is_empty(),
        if detail.is_empty() {
            format!("{} customers each visited once", inst.n_customers())
        } else {
            detail.join("; ")
        },
    );

    let mut over = Vec::new();
    for (k, (_, _, vs)) in routes.iter().enumerate() {
        let load: f64 = vs.iter().map(|&v| inst.demand(v)).sum();
        if load > inst.capacity() + OBJ_EPS {
            over.push(format!("route {} load {load} > {}", k + 1, inst.capacity()));
        }
    }
    push(
        "capacity",
        over.is_empty(),
        if over.is_empty() {
            format!("every route within {}", inst.capacity())
        } else {
            over.join("; ")
        },
    );

    let mut open_sorted = open.clone();
    open_sorted.sort_unstable();
    open_sorted.dedup();
    push(
        "depots",
        open_sorted.len() <= inst.max_open_depots(),
        format!("{} open, limit {}", open_sorted.len(), inst.max_open_depots()),
    );

    let closed: Vec<String> = routes
        .iter()
        .filter(|(_, d, _)| d.is_some_and(|d| !open_sorted.contains(&d)))
        .map(|(id, _, _)| id.to_string())
        .collect();
    push(
        "route depots",
        closed.is_empty(),
        if closed.is_empty() {
            "every route starts at an open depot".into()
        } else {
            format!("route at closed depot {}", closed.join(" "))
        },
    );

    let used = routes.iter().filter(|(_, _, vs)| !vs.is_empty()).count();
    push(
        "routes",
        used <= inst.fleet_size(),
        format!("{used} routes, limit {}", inst.fleet_size()),
    );

    let recomputed = if unknown.is_empty() {
        let mut total = 0.0;
        for (_, d, vs) in &routes {
            let mut t = 0.0;
            let mut prev = d.expect("depots checked");
            for &v in vs {
                let (x0, y0) = inst.coords(prev);
                let (x1, y1) = inst.coords(v);
                t += (x1 - x0).hypot(y1 - y0);
                total += t;
                prev = v;
            }
        }
        Some(total)
    } else {
        None
    };
    match recomputed {
        Some(f) => push(
            "objective",
            (f - file.objective).abs() <= VALIDATE_TOL,
            format!("declared {:.2}, recomputed {f:.6}", file.objective),
        ),
        None => push("objective", false, "not recomputed: unknown ids".into()),
    }
    ValidationReport { checks, recomputed }
}

/// Solutions loaded for arc-sharing analysis, sorted by objective.
#[derive(Debug, Clone)]
pub struct EdgeAnalysis {
    pub names: Vec<String>,
    pub objectives: Vec<f64>,
    /// Pairwise common directed-arc counts.
    pub matrix: Vec<Vec<usize>>,
    /// `|E_best ∩ E_s| / |E_s|` for each solution.
    pub ratios: Vec<f64>,
}

pub fn analyze_edges(inst: &Instance, mut sols: Vec<(String, Solution)>) -> Result<EdgeAnalysis> {
    if sols.len() < 2 {
        return Err(Error::Config("edge analysis needs at least two solutions".into()));
    }
    sols.sort_by(|a, b| a.1.objective().total_cmp(&b.1.objective()).then_with(|| a.0.cmp(&b.0)));
    let sigs: Vec<_> = sols.iter().map(|(_, s)| s.arc_signature(inst)).collect();
    let n = sols.len();
    let mut matrix = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = sigs[i].common_arcs(&sigs[j]);
            matrix[i][j] = c;
            matrix[j][i] = c;
        }
    }
    let ratios = (0..n)
        .map(|k| matrix[0][k] as f64 / sigs[k].arc_count() as f64)
        .collect();
    Ok(EdgeAnalysis {
        names: sols.iter().map(|(n, _)| n.clone()).collect(),
        objectives: sols.iter().map(|(_, s)| s.objective()).collect(),
        matrix,
        ratios,
    })
}

/// Loads every `*.sol` file in `dir` as a solution of `inst`.
pub fn load_solution_dir(inst: &Instance, dir: &Path) -> Result<Vec<(String, Solution)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sol"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let data = SolutionFile::read(p)?;
            let name = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok((name, Solution::from_file_data(inst, &data)?))
        })
        .collect()
}

impl EdgeAnalysis {
    pub fn matrix_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["solution".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.matrix) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(usize::to_string));
            w.write_record(&rec)?;
        }
        finish_csv(EDGE_MATRIX_SCHEMA, w)
    }

    pub fn ratio_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["solution", "objective", "ratio"])?;
        for k in 0..self.names.len() {
            w.write_record([
                self.names[k].clone(),
                format!("{:.2}", self.objectives[k]),
                format!("{:.6}", self.ratios[k]),
            ])?;
        }
        finish_csv(EDGE_RATIO_SCHEMA, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solution::tests::random_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rho_for_hundred_runs() {
        let rows = ttt_rows((0..100).map(|k| (k, (100 - k) as f64, None, false)).collect());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.rho, (i as f64 + 0.5) / 100.0);
            assert_eq!(r.rank, i + 1);
        }
        assert!(rows.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(rows[0].seed, 99);
    }

    #[test]
    fn single_run_rho_is_half() {
        assert_eq!(ttt_rows(vec![(7, 0.0, Some(1.0), false)])[0].rho, 0.5);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"bc").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"bc");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn validate_flags_duplicate_and_objective() {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(11), 3, 6, 2, 40.0);
        let cfg = SearchConfig {
            max_generations: 5,
            population_size: 4,
            ..SearchConfig::default()
        };
        let r = run(&inst, &cfg).unwrap();
        let text = r.best.to_text(&inst);
        let file = SolutionFile::parse(&text, Path::new("x")).unwrap();
        let rep = validate_file(&inst, &file);
        assert!(rep.passed(), "{}", rep.render());

        let mut bad = file.clone();
        bad.objective += 1.0;
        let rep = validate_file(&inst, &bad);
        assert!(!rep.passed());
        assert!(rep.checks.iter().any(|c| c.name == "objective" && !c.pass));

        let mut dup = file.clone();
        let c = dup.routes[0].1[0];
        let last = dup.routes.len() - 1;
        dup.routes[last].1.push(c);
        let rep = validate_file(&inst, &dup);
        let chk = rep.checks.iter().find(|c| c.name == "customers").unwrap();
        assert!(!chk.pass);
        assert!(chk.detail.contains(&c.to_string()));
    }

    #[test]
    fn bench_rows_are_consistent() {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(3), 2, 6, 2, 40.0);
        let cfg = SearchConfig {
            max_generations: 5,
            population_size: 4,
            ..SearchConfig::default()
        };
        let seeds = run_seeds(9, 2);
        let row = bench_row("a", &inst, &cfg, &seeds, Some(1.0), false);
        assert!(row.error.is_none());
        assert!(row.f_avg.unwrap() >= row.f_best.unwrap());
        let a = bench_csv(std::slice::from_ref(&row), false).unwrap();
        let b = bench_csv(&[bench_row("a", &inst, &cfg, &seeds, Some(1.0), true)], false).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(BENCH_SCHEMA));
    }
}
