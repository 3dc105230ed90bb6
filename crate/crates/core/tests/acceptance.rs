//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line on
//! stderr; the test fails if any criterion fails.
//!
//! Benchmark instances are read from `$LLRP_DATA_DIR/manifest.csv`
//! (default: `data/manifest.csv` at the workspace root). Set
//! `LLRP_ACCEPTANCE_ONLY=3,4` to run a subset.

use std::collections::HashMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use llrp_core::crossover::{mpeax3, mpeax_pair_traced, Parent};
use llrp_core::harness::{self, bench_csv, bench_row, run_seeds, ttt_csv, write_atomic};
use llrp_core::instance::{read_manifest, Customer, Depot, DEFAULT_DELTA};
use llrp_core::neighborhoods::{apply, enumerate_moves, undo};
use llrp_core::qlearn::{untried, QModel, State};
use llrp_core::neighborhoods::Neighborhood;
use llrp_core::rng::derive_seed;
use llrp_core::solution::{evaluate, evaluate_extended, PenaltyState, Solution, BETA_MAX, BETA_MIN};
use llrp_core::{run, Instance, SearchConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- fixtures

fn random_instance(rng: &mut ChaCha8Rng, nd: usize, nc: usize, nv: usize, md: usize, cap: f64) -> Instance {
    let depots = (0..nd)
        .map(|k| Depot {
            id: k as u32 + 1,
            x: rng.gen_range(0..=100) as f64,
            y: rng.gen_range(0..=100) as f64,
        })
        .collect();
    let customers = (0..nc)
        .map(|k| Customer {
            id: k as u32 + 1,
            x: rng.gen_range(0..=100) as f64,
            y: rng.gen_range(0..=100) as f64,
            demand: rng.gen_range(1..=10) as f64,
        })
        .collect();
    Instance::new("fuzz", depots, customers, cap, nv, md, DEFAULT_DELTA).unwrap()
}

/// Random instance with a capacity that may or may not be tight.
fn fuzz_instance(rng: &mut ChaCha8Rng, max_customers: usize) -> Instance {
    let nd = rng.gen_range(1..=5);
    let nv = rng.gen_range(1..=4);
    let nc = rng.gen_range(nv.max(2)..=max_customers);
    let md = rng.gen_range(1..=nd);
    let cap = rng.gen_range(10..=60) as f64;
    random_instance(rng, nd, nc, nv, md, cap.max(10.0))
}

/// Random structure-valid solution, possibly over capacity.
fn random_solution(inst: &Instance, rng: &mut ChaCha8Rng) -> Solution {
    let mut depots: Vec<usize> = (0..inst.n_depots()).collect();
    depots.shuffle(rng);
    let k = rng.gen_range(1..=inst.max_open_depots());
    let open = depots[..k].to_vec();
    let mut cs: Vec<usize> = inst.customer_vertices().collect();
    cs.shuffle(rng);
    let nv = inst.fleet_size();
    let mut routes: Vec<(usize, Vec<usize>)> = (0..nv).map(|_| (*open.choose(rng).unwrap(), Vec::new())).collect();
    for (k, c) in cs.into_iter().enumerate() {
        let r = if k < nv { k } else { rng.gen_range(0..nv) };
        routes[r].1.push(c);
    }
    Solution::new(inst, &open, routes).unwrap()
}

fn euclid(inst: &Instance, a: usize, b: usize) -> f64 {
    let (x0, y0) = inst.coords(a);
    let (x1, y1) = inst.coords(b);
    ((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0)).sqrt()
}

/// Objective from coordinates, independent of the library's evaluator.
fn oracle_latency(inst: &Instance, sol: &Solution) -> f64 {
    let mut total = 0.0;
    for r in sol.routes() {
        let mut t = 0.0;
        let mut prev = r.depot();
        for &c in r.customers() {
            t += euclid(inst, prev, c);
            total += t;
            prev = c;
        }
    }
    total
}

fn oracle_penalized(inst: &Instance, sol: &Solution, beta: f64) -> f64 {
    let excess: f64 = sol
        .routes()
        .iter()
        .map(|r| (r.customers().iter().map(|&c| inst.demand(c)).sum::<f64>() - inst.capacity()).max(0.0))
        .sum();
    oracle_latency(inst, sol) + beta * excess
}

fn data_dir() -> PathBuf {
    match std::env::var_os("LLRP_DATA_DIR") {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

fn load_named(names: &[&str]) -> Result<HashMap<String, Instance>, String> {
    let dir = data_dir();
    let manifest = dir.join("manifest.csv");
    let entries = read_manifest(&manifest).map_err(|e| format!("benchmark data unavailable ({}): {e}", manifest.display()))?;
    let mut out = HashMap::new();
    for &name in names {
        let e = entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| format!("instance {name} missing from {}", manifest.display()))?;
        out.insert(name.to_string(), e.load(&dir, DEFAULT_DELTA).map_err(|err| format!("{name}: {err}"))?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- criteria

fn c1_known_optima() -> Outcome {
    let targets = [
        ("20-5-1", 330.00),
        ("20-5-2", 301.97),
        ("20-5-1b", 608.05),
        ("20-5-2b", 486.55),
        ("Gaskell_21_5", 653.48),
        ("Gaskell_29_5", 1199.33),
        ("Min_27_5", 5387.55),
    ];
    let insts = load_named(&targets.map(|t| t.0))?;
    let mut misses = Vec::new();
    let mut report = Vec::new();
    for (name, opt) in targets {
        let inst = &insts[name];
        let cfg = SearchConfig {
            time_limit: Some(60.0),
            target: Some(opt + 1e-2),
            ..SearchConfig::default()
        };
        let start = Instant::now();
        let r = run(inst, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        report.push(format!("{name} {:.2} in {:.1}s", r.objective, r.best_time));
        if (r.objective - opt).abs() > 1e-2 || secs > 60.0 + 1.0 {
            misses.push(format!("{name}: got {:.4}, want {opt} (seed {})", r.objective, cfg.seed));
        }
    }
    if misses.is_empty() {
        Ok(report.join(", "))
    } else {
        Err(misses.join("; "))
    }
}

fn c2_mid_size() -> Outcome {
    let targets = [("50-5-1", 843.93), ("Christ_50_5", 1661.64)];
    let insts = load_named(&targets.map(|t| t.0))?;
    let mut misses = Vec::new();
    let mut report = Vec::new();
    for (name, bks) in targets {
        let inst = &insts[name];
        let limit = bks * 1.005;
        let mut best = f64::INFINITY;
        for seed in run_seeds(1, 5) {
            let cfg = SearchConfig {
                seed,
                time_limit: Some(300.0),
                target: Some(limit),
                ..SearchConfig::default()
            };
            let r = run(inst, &cfg).map_err(|e| format!("{name}: {e}"))?;
            best = best.min(r.objective);
            if best <= limit {
                break;
            }
        }
        let gap = 100.0 * (best - bks) / bks;
        report.push(format!("{name} {best:.2} ({gap:+.3}%)"));
        if best > limit {
            misses.push(format!("{name}: best {best:.2} is {gap:.3}% above {bks}"));
        }
    }
    if misses.is_empty() {
        Ok(report.join(", "))
    } else {
        Err(misses.join("; "))
    }
}

/// Minimum latency of visiting the customers of `mask` from `depot`, by
/// trying every order.
fn best_route(inst: &Instance, depot: usize, cs: &[usize], mask: usize) -> f64 {
    fn go(inst: &Instance, cs: &[usize], left: usize, prev: usize, remaining: usize) -> f64 {
        if left == 0 {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (k, &c) in cs.iter().enumerate() {
            if left & (1 << k) != 0 {
                let v = remaining as f64 * euclid(inst, prev, c) + go(inst, cs, left & !(1 << k), c, remaining - 1);
                best = best.min(v);
            }
        }
        best
    }
    go(inst, cs, mask, depot, mask.count_ones() as usize)
}

/// Exhaustive optimum: every depot subset of size at most `N_d`, every
/// partition of the customers into at most `N_v` routes, every order.
fn brute_force(inst: &Instance) -> f64 {
    let cs: Vec<usize> = inst.customer_vertices().collect();
    let n = cs.len();
    let full = (1usize << n) - 1;
    let nd = inst.n_depots();
    let load: Vec<f64> = (0..=full)
        .map(|m| (0..n).filter(|k| m & (1 << k) != 0).map(|k| inst.demand(cs[k])).sum())
        .collect();
    let route_cost: Vec<Vec<f64>> = (0..nd)
        .map(|d| (0..=full).map(|m| best_route(inst, d, &cs, m)).collect())
        .collect();
    let mut best = f64::INFINITY;
    for depots in 1usize..(1 << nd) {
        if depots.count_ones() as usize > inst.max_open_depots() {
            continue;
        }
        let cost: Vec<f64> = (0..=full)
            .map(|m| {
                if load[m] > inst.capacity() + 1e-9 {
                    f64::INFINITY
                } else {
                    (0..nd)
                        .filter(|d| depots & (1 << d) != 0)
                        .map(|d| route_cost[d][m])
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        // cover[m]: best cost of serving exactly m with the routes so far
        let mut cover = vec![f64::INFINITY; full + 1];
        cover[0] = 0.0;
        for _ in 0..inst.fleet_size() {
            let prev = cover.clone();
            for m in 1..=full {
                let low = m & m.wrapping_neg();
                let mut sub = m;
                while sub > 0 {
                    if sub & low != 0 {
                        let v = cost[sub] + prev[m ^ sub];
                        if v < cover[m] {
                            cover[m] = v;
                        }
                    }
                    sub = (sub - 1) & m;
                }
            }
        }
        best = best.min(cover[full]);
    }
    best
}

fn c3_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut solved = 0;
    let mut failures = Vec::new();
    let mut k = 0u64;
    while solved < 200 {
        k += 1;
        let nd = rng.gen_range(1..=4);
        let nv = rng.gen_range(1..=3);
        let nc = rng.gen_range(nv.max(2)..=7);
        let md = rng.gen_range(1..=nd.min(3));
        let cap = rng.gen_range(12..=50) as f64;
        let inst = random_instance(&mut rng, nd, nc, nv, md, cap);
        if inst.total_demand() > cap * nv as f64 {
            continue;
        }
        let opt = brute_force(&inst);
        if !opt.is_finite() {
            continue;
        }
        solved += 1;
        let cfg = SearchConfig {
            seed: derive_seed(0xC3, k),
            ..SearchConfig::default()
        };
        match run(&inst, &cfg) {
            Ok(r) => {
                let f = oracle_latency(&inst, &r.best);
                if f < opt - 1e-6 {
                    return Err(format!("instance {k}: engine {f} beats exhaustive {opt}; oracle broken"));
                }
                if f > opt + 1e-6 || !r.best.is_feasible(&inst) {
                    failures.push(format!("instance {k} seed {}: {f:.4} vs {opt:.4}", cfg.seed));
                }
            }
            Err(e) => failures.push(format!("instance {k} seed {}: {e}", cfg.seed)),
        }
    }
    let rate = (solved - failures.len()) as f64 / solved as f64;
    for f in &failures {
        let _ = writeln!(std::io::stderr(), "  C3 miss: {f}");
    }
    check(rate >= 0.99, || format!("{:.1}% optimal (<99%): {}", 100.0 * rate, failures.join("; ")))?;
    Ok(format!("{}/{} optimal", solved - failures.len(), solved))
}

fn c4_delta_soundness() -> Outcome {
    const PAIRS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut per_kind = [0usize; 7];
    let mut checked = 0;
    while checked < PAIRS {
        let inst = fuzz_instance(&mut rng, 20);
        let sol = random_solution(&inst, &mut rng);
        let beta = 10f64.powf(rng.gen_range(-3.0..3.0));
        let before = oracle_penalized(&inst, &sol, beta);
        for k in 1..=7 {
            let granular = rng.gen_bool(0.5);
            let moves = enumerate_moves(&sol, &inst, k, beta, granular).map_err(|e| e.to_string())?;
            for mv in moves.choose_multiple(&mut rng, 3) {
                let mut s = sol.clone();
                let u = apply(&mut s, &inst, mv);
                s.check_structure(&inst).map_err(|e| format!("N{k} broke the solution: {e}"))?;
                let after = oracle_penalized(&inst, &s, beta);
                let lib = evaluate_extended(&s, &inst, beta).map_err(|e| e.to_string())?;
                check((lib - after).abs() <= 1e-6, || format!("N{k}: evaluator {lib} vs oracle {after}"))?;
                check((mv.delta - (after - before)).abs() <= 1e-6, || {
                    format!("N{k}: delta {} vs recomputed {} (beta {beta})", mv.delta, after - before)
                })?;
                undo(&mut s, &inst, u);
                check(s == sol, || format!("N{k}: undo did not restore the solution"))?;
                per_kind[k - 1] += 1;
                checked += 1;
            }
        }
    }
    check(per_kind.iter().all(|&c| c > 1000), || format!("operator coverage too thin: {per_kind:?}"))?;
    Ok(format!("{checked} moves, per operator {per_kind:?}"))
}

fn supernode_arcs(inst: &Instance, s: &Solution) -> Vec<(u32, u32)> {
    let nd = inst.n_depots();
    let sn = inst.n_customers() as u32;
    let mut arcs = Vec::new();
    for r in s.routes() {
        let mut prev = sn;
        for &c in r.customers() {
            let c = (c - nd) as u32;
            arcs.push((prev, c));
            prev = c;
        }
        arcs.push((prev, sn));
    }
    arcs
}

/// Multiset difference `a − b`.
fn multiset_minus(a: &[(u32, u32)], b: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut count: HashMap<(u32, u32), i64> = HashMap::new();
    for &x in b {
        *count.entry(x).or_default() += 1;
    }
    let mut out = Vec::new();
    for &x in a {
        let c = count.entry(x).or_default();
        if *c > 0 {
            *c -= 1;
        } else {
            out.push(x);
        }
    }
    out.sort_unstable();
    out
}

fn c5_crossover() -> Outcome {
    const RUNS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut subtours = 0;
    for it in 0..RUNS {
        let inst = fuzz_instance(&mut rng, 30);
        let a = random_solution(&inst, &mut rng);
        let b = random_solution(&inst, &mut rng);
        let c = random_solution(&inst, &mut rng);
        let (child, trace) = mpeax_pair_traced(&inst, &a, &b, &mut rng);
        subtours += trace.subtours;

        for s in [&child, &mpeax3(&inst, &a, &b, &c, &mut rng)] {
            let mut seen: Vec<usize> = s.routes().iter().flat_map(|r| r.customers().iter().copied()).collect();
            seen.sort_unstable();
            let all: Vec<usize> = inst.customer_vertices().collect();
            check(seen == all, || format!("case {it}: customers not conserved"))?;
            check(s.routes().iter().all(|r| inst.is_depot(r.depot())), || format!("case {it}: bad depot"))?;
        }

        let ea = supernode_arcs(&inst, &a);
        let eb = supernode_arcs(&inst, &b);
        let union: std::collections::HashSet<(u32, u32)> = ea.iter().chain(&eb).copied().collect();
        check(trace.pre_repair_arcs.iter().all(|x| union.contains(x)), || {
            format!("case {it}: pre-repair arc outside the parents")
        })?;

        let mut got_a = Vec::new();
        let mut got_b = Vec::new();
        for seq in &trace.sequences {
            let arcs = &seq.arcs;
            for (k, w) in arcs.windows(2).enumerate() {
                check(w[0].0 != w[1].0, || format!("case {it}: arcs {k},{} from one parent", k + 1))?;
                // forward along A into a node, backwards along B out of it
                let joined = match w[0].0 {
                    Parent::A => w[0].2 == w[1].2,
                    Parent::B => w[0].1 == w[1].1,
                };
                check(joined, || format!("case {it}: sequence is not a walk"))?;
            }
            check(arcs.len() % 2 == 0 && arcs[0].0 == Parent::A, || format!("case {it}: malformed sequence"))?;
            check(arcs[arcs.len() - 1].1 == arcs[0].1, || format!("case {it}: sequence not closed"))?;
            for &(p, x, y) in arcs {
                match p {
                    Parent::A => got_a.push((x, y)),
                    Parent::B => got_b.push((x, y)),
                }
            }
        }
        got_a.sort_unstable();
        got_b.sort_unstable();
        check(got_a == multiset_minus(&ea, &eb) && got_b == multiset_minus(&eb, &ea), || {
            format!("case {it}: sequences do not partition the symmetric difference")
        })?;
    }
    check(subtours > 0, || "no sub-tour ever arose; fuzzing too weak".into())?;
    Ok(format!("{RUNS} crossovers, {subtours} sub-tours repaired"))
}

fn c6_penalty() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let (mut feas, mut infeas) = (0, 0);
    for it in 0..10_000 {
        let inst = fuzz_instance(&mut rng, 20);
        let sol = random_solution(&inst, &mut rng);
        let beta = 10f64.powf(rng.gen_range(-2.0..6.0));
        let f = evaluate(&sol, &inst).map_err(|e| e.to_string())?;
        let big_f = evaluate_extended(&sol, &inst, beta).map_err(|e| e.to_string())?;
        let feasible = sol
            .routes()
            .iter()
            .all(|r| r.customers().iter().map(|&c| inst.demand(c)).sum::<f64>() <= inst.capacity());
        check(big_f >= f, || format!("case {it}: F {big_f} < f {f}"))?;
        check((big_f == f) == feasible, || format!("case {it}: F == f is {} but feasible is {feasible}", big_f == f))?;
        if feasible {
            feas += 1;
        } else {
            infeas += 1;
        }
    }
    check(feas > 100 && infeas > 100, || format!("unbalanced fuzz: {feas} feasible, {infeas} infeasible"))?;

    // (start β, window, accepted feasibility flags, coin, expected β)
    let table: &[(f64, usize, &[bool], f64, f64)] = &[
        (1.0, 4, &[false, false, false, false], 0.0, 1.5),
        (1.0, 4, &[false, false, false, false], 1.0, 2.5),
        (10.0, 4, &[true, true, true, true], 0.0, 10.0 / 1.5),
        (10.0, 4, &[true, true, true, true], 1.0, 4.0),
        (2.0, 2, &[true, false, false], 1.0, 5.0),
        (3.0, 1, &[true], 0.0, 2.0),
        (BETA_MAX, 1, &[false], 1.0, BETA_MAX),
        (BETA_MIN, 1, &[true], 1.0, BETA_MIN),
    ];
    for (k, &(beta, window, flags, coin, want)) in table.iter().enumerate() {
        let mut p = PenaltyState::new(beta, window);
        let mut saturated = false;
        for &fl in flags {
            saturated = p.record(fl);
        }
        check(saturated, || format!("table row {k}: not saturated"))?;
        p.adjust_with_coin(coin).map_err(|e| e.to_string())?;
        check((p.beta - want).abs() <= 1e-12 * want.max(1.0), || format!("table row {k}: β {} want {want}", p.beta))?;
        check(p.feasible_run == 0 || p.infeasible_run == 0, || format!("table row {k}: counters"))?;
    }
    let mut p = PenaltyState::new(1.0, 3);
    p.record(true);
    check(p.adjust_with_coin(0.0).is_err(), || "adjust accepted without saturation".into())?;

    for _ in 0..10_000 {
        let window = rng.gen_range(1..=6);
        let mut p = PenaltyState::new(10f64.powf(rng.gen_range(-9.0..12.0)), window);
        for _ in 0..50 {
            if p.record(rng.gen_bool(0.6)) {
                p.adjust(&mut rng).map_err(|e| e.to_string())?;
            }
            check(p.feasible_run <= window && p.infeasible_run <= window, || "counter above u_p".into())?;
            check((BETA_MIN..=BETA_MAX).contains(&p.beta), || format!("β {} out of range", p.beta))?;
        }
    }
    Ok(format!("{feas} feasible / {infeas} infeasible fuzz cases, {} table rows", table.len()))
}

fn c7_qlearning() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let (alpha, gamma, eps) = (0.2, 0.85, 0.7);
    // Q update: (q, r, next Q values, expected)
    let n1 = Neighborhood::Relocate;
    let q_cases: &[(f64, f64, &[f64])] = &[
        (0.0, 0.0, &[0.0; 6]),
        (1.0, 2.0, &[0.5, 3.0, -1.0, 0.0, 0.0, 0.0]),
        (-4.0, 10.0, &[-2.0, -3.0, -1.0, -7.0, -9.0, -1.5]),
        (123.25, -0.5, &[1e3, 2.0, 0.0, 0.0, 0.0, 0.0]),
    ];
    for (k, &(q0, r0, next)) in q_cases.iter().enumerate() {
        let mut m = QModel::new(alpha, gamma, eps);
        let s: State = 0;
        let s2: State = n1.bit();
        m.set_q(s, n1, q0);
        m.set_r(s, n1, r0);
        for (a, &v) in untried(s2).into_iter().zip(next) {
            m.set_q(s2, a, v);
        }
        m.update_q(s, n1, s2);
        let max = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want = (1.0 - alpha) * q0 + alpha * (r0 + gamma * max);
        check(close(m.q(s, n1), want), || format!("Q case {k}: {} want {want}", m.q(s, n1)))?;
    }
    // terminal next state: no future term
    let mut m = QModel::new(alpha, gamma, eps);
    let s: State = 0b011_1111;
    let last = Neighborhood::SwapStar;
    m.set_q(s, last, 2.0);
    m.set_r(s, last, 1.0);
    m.update_q(s, last, 0b111_1111);
    check(close(m.q(s, last), 0.8 * 2.0 + 0.2 * 1.0), || "terminal Q update".into())?;

    // reward: (previous R, Δ_r, Δ_b, untried count)
    let r_cases: &[(f64, f64, f64, usize)] = &[
        (0.0, 0.0, 0.0, 7),
        (1.0, 2.5, 0.0, 7),
        (1.0, 2.5, 3.0, 7),
        (1.0, 2.5, 3.0, 1),
        (-2.0, 0.75, 0.25, 4),
        (5.0, -1.0, 4.0, 3),
        (0.0, 1.0, -2.0, 2),
    ];
    for (k, &(r0, dr, db, n_untried)) in r_cases.iter().enumerate() {
        let mut m = QModel::new(alpha, gamma, eps);
        m.set_r(0, n1, r0);
        m.update_reward(0, n1, dr, db, n_untried);
        let bonus = if dr > 0.0 { db.max(0.0) * (7.0 - n_untried as f64).exp() } else { 0.0 };
        let want = 0.95 * r0 + dr + bonus;
        check(close(m.r(0, n1), want), || format!("R case {k}: {} want {want}", m.r(0, n1)))?;
    }

    // ε-greedy frequencies against the exact distribution (α = 0.001)
    let mut chi_report = Vec::new();
    for (state, critical) in [(0 as State, 22.458), (0b101_0110 as State, 13.816)] {
        let mut m = QModel::new(alpha, gamma, eps);
        let acts = untried(state);
        for (k, &a) in acts.iter().enumerate() {
            m.set_q(state, a, k as f64 * 0.5 - 1.0);
        }
        let greedy = *acts.last().unwrap();
        let mut counts = vec![0usize; acts.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(0xC7 + state as u64);
        const DRAWS: usize = 10_000;
        for _ in 0..DRAWS {
            let a = m.select_action(state, &mut rng).map_err(|e| e.to_string())?;
            counts[acts.iter().position(|&x| x == a).unwrap()] += 1;
        }
        let k = acts.len() as f64;
        let chi: f64 = acts
            .iter()
            .zip(&counts)
            .map(|(&a, &c)| {
                let p = (1.0 - eps) / k + if a == greedy { eps } else { 0.0 };
                let e = p * DRAWS as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        check(chi < critical, || format!("χ² {chi:.2} ≥ {critical} for state {state:#b}"))?;
        chi_report.push(format!("χ²={chi:.2}"));
    }
    Ok(format!("{} Q cases, {} R cases, {}", q_cases.len() + 1, r_cases.len(), chi_report.join(" ")))
}

fn c8_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let insts: Vec<Instance> = (0..3).map(|_| random_instance(&mut rng, 4, 18, 3, 2, 45.0)).collect();
    for (k, inst) in insts.iter().enumerate() {
        for preset in llrp_core::AblationPreset::ALL {
            let mut cfg = SearchConfig {
                seed: 40 + k as u64,
                max_generations: 150,
                population_size: 8,
                stagnation_limit: 40,
                ..SearchConfig::default()
            };
            preset.apply(&mut cfg);
            let mut bytes = Vec::new();
            for rep in 0..2 {
                let r = run(inst, &cfg).map_err(|e| e.to_string())?;
                let p = dir.path().join(format!("{k}-{preset}-{rep}.sol"));
                write_atomic(&p, r.best.to_text(inst).as_bytes()).map_err(|e| e.to_string())?;
                bytes.push(std::fs::read(&p).map_err(|e| e.to_string())?);
            }
            check(bytes[0] == bytes[1], || format!("instance {k} {preset}: solution files differ"))?;
        }
    }
    let cfg = SearchConfig {
        seed: 9,
        max_generations: 100,
        population_size: 6,
        ..SearchConfig::default()
    };
    let seeds = run_seeds(cfg.seed, 3);
    let report = |parallel: bool| {
        let rows: Vec<_> = insts
            .iter()
            .enumerate()
            .map(|(k, inst)| bench_row(&format!("inst{k}"), inst, &cfg, &seeds, None, parallel))
            .collect();
        bench_csv(&rows, false).map_err(|e| e.to_string())
    };
    let a = report(true)?;
    let b = report(true)?;
    let c = report(false)?;
    check(a == b, || "bench reports differ between reruns".into())?;
    check(a == c, || "parallel and sequential bench reports differ".into())?;
    Ok(format!("{} presets × {} instances, bench report {} bytes", llrp_core::AblationPreset::ALL.len(), insts.len(), a.len()))
}

fn c9_ttt() -> Outcome {
    let rows = harness::ttt_rows((0..100u64).map(|k| (k, ((k * 37) % 100) as f64, None, false)).collect());
    for (i, r) in rows.iter().enumerate() {
        let want = (i as f64 + 1.0 - 0.5) / 100.0;
        check(r.rho == want, || format!("ρ_{} = {} want {want}", i + 1, r.rho))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    let inst = random_instance(&mut rng, 3, 10, 2, 2, 40.0);
    let cfg = SearchConfig {
        seed: 5,
        max_generations: 200,
        population_size: 6,
        ..SearchConfig::default()
    };
    let reference = run(&inst, &cfg).map_err(|e| e.to_string())?.objective;
    let rows = harness::ttt(&inst, &cfg, reference * 1.02, 100, 5.0).map_err(|e| e.to_string())?;
    let text = ttt_csv(&rows).map_err(|e| e.to_string())?;
    let body = text.split_once('\n').map(|x| x.1).ok_or("missing schema line")?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut prev_rho = 0.0;
    let mut prev_t = f64::NEG_INFINITY;
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let t: f64 = rec[2].parse().map_err(|_| "bad time")?;
        let rho: f64 = rec[3].parse().map_err(|_| "bad rho")?;
        check(rho == (i as f64 + 0.5) / 100.0, || format!("row {i}: ρ {rho}"))?;
        check(rho > prev_rho && rho < 1.0, || format!("row {i}: ρ not increasing in (0,1)"))?;
        check(t >= prev_t, || format!("row {i}: times not sorted"))?;
        prev_rho = rho;
        prev_t = t;
        n += 1;
    }
    check(n == 100, || format!("{n} rows"))?;
    let censored = rows.iter().filter(|r| r.censored).count();
    Ok(format!("100 rows parsed, {censored} censored"))
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<usize>> = std::env::var("LLRP_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 9] = [
        (1, "known optima", c1_known_optima),
        (2, "mid-size quality", c2_mid_size),
        (3, "oracle equivalence", c3_oracle_equivalence),
        (4, "delta-evaluation soundness", c4_delta_soundness),
        (5, "crossover provenance and conservation", c5_crossover),
        (6, "penalty and oscillation invariants", c6_penalty),
        (7, "Q-learning arithmetic", c7_qlearning),
        (8, "determinism", c8_determinism),
        (9, "TTT harness", c9_ttt),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(d) => format!("PASS criterion {id} ({name}) [{secs:.1}s]: {d}"),
            Err(d) => format!("FAIL criterion {id} ({name}) [{secs:.1}s]: {d}"),
        };
        let _ = writeln!(std::io::stderr(), "{line}");
        if outcome.is_err() {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
