//! Search configuration and the main evolutionary loop.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossover::{mpeax3, mpeax_pair, ox_crossover};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::population::{greedy_construct, random_construct, Population};
use crate::qlearn::QModel;
use crate::rng::{stream, SearchRng, Stream};
use crate::solution::Solution;
use crate::sovnd::rl_sovnd;
use crate::variation::{mutate, repair, DepotFrequency};
use crate::OBJ_EPS;

/// Construction attempts allowed per population slot before giving up on
/// filling the population with unique members.
pub const INIT_ATTEMPTS_PER_SLOT: usize = 5;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverKind {
    Mpeax3,
    Mpeax2,
    Ox,
}
string_enum!(CrossoverKind { Mpeax3 => "mpeax3", Mpeax2 => "mpeax2", Ox => "ox" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VndOrder {
    #[serde(rename = "qlearning")]
    QLearning,
    Random,
    Fixed,
}
string_enum!(VndOrder { QLearning => "qlearning", Random => "random", Fixed => "fixed" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oscillation {
    Adaptive,
    FeasibleOnly,
    FixedBeta,
}
string_enum!(Oscillation { Adaptive => "adaptive", FeasibleOnly => "feasible_only", FixedBeta => "fixed_beta" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentSelection {
    ShortestLife,
    Random,
}
string_enum!(ParentSelection { ShortestLife => "shortest_life", Random => "random" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    OneOf,
    Both,
}
string_enum!(MutationMode { OneOf => "one_of", Both => "both" });

/// Named algorithm variants: the full method and its six ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationPreset {
    Rlhea,
    Rlhea1,
    Rlhea2,
    Rlhea3,
    Rlhea4,
    Rlhea5,
    Rlhea6,
}
string_enum!(AblationPreset {
    Rlhea => "rlhea",
    Rlhea1 => "rlhea1",
    Rlhea2 => "rlhea2",
    Rlhea3 => "rlhea3",
    Rlhea4 => "rlhea4",
    Rlhea5 => "rlhea5",
    Rlhea6 => "rlhea6",
});

impl AblationPreset {
    /// Sets the switches of this variant, leaving every other field alone.
    pub fn apply(self, cfg: &mut SearchConfig) {
        cfg.crossover = CrossoverKind::Mpeax3;
        cfg.vnd_order = VndOrder::QLearning;
        cfg.oscillation = Oscillation::Adaptive;
        match self {
            AblationPreset::Rlhea => {}
            AblationPreset::Rlhea1 => cfg.crossover = CrossoverKind::Ox,
            AblationPreset::Rlhea2 => cfg.crossover = CrossoverKind::Mpeax2,
            AblationPreset::Rlhea3 => cfg.vnd_order = VndOrder::Random,
            AblationPreset::Rlhea4 => cfg.vnd_order = VndOrder::Fixed,
            AblationPreset::Rlhea5 => cfg.oscillation = Oscillation::FeasibleOnly,
            AblationPreset::Rlhea6 => cfg.oscillation = Oscillation::FixedBeta,
        }
    }
}

/// Every tunable of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Probability of mutating an offspring (`m_p`).
    pub mutation_prob: f64,
    /// Mutation rounds (`m_l`).
    pub mutation_len: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Probability of the greedy action.
    pub epsilon: f64,
    /// Penalty adjustment window (`u_p`).
    pub window: usize,
    /// Candidate list length.
    pub delta: usize,
    /// Population size (`τ`).
    pub population_size: usize,
    /// Generations without improvement before partial replacement (`I_r`).
    pub stagnation_limit: usize,
    pub memory_size: usize,
    pub max_generations: usize,
    pub seed: u64,
    pub crossover: CrossoverKind,
    pub vnd_order: VndOrder,
    pub oscillation: Oscillation,
    pub parent_selection: ParentSelection,
    pub mutation_mode: MutationMode,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Stop as soon as a feasible solution this good is found.
    pub target: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mutation_prob: 0.1,
            mutation_len: 2,
            alpha: 0.2,
            gamma: 0.85,
            epsilon: 0.7,
            window: 4,
            delta: 20,
            population_size: 20,
            stagnation_limit: 1000,
            memory_size: 3000,
            max_generations: 5000,
            seed: 1,
            crossover: CrossoverKind::Mpeax3,
            vnd_order: VndOrder::QLearning,
            oscillation: Oscillation::Adaptive,
            parent_selection: ParentSelection::ShortestLife,
            mutation_mode: MutationMode::OneOf,
            time_limit: None,
            target: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("alpha and gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.delta == 0 {
            return bad("delta must be at least 1");
        }
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if let Some(t) = self.time_limit {
            if t.is_nan() || t < 0.0 {
                return bad("time_limit must be non-negative");
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SearchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable one-line description of every search-affecting field except
    /// the seed.
    pub fn fingerprint(&self) -> String {
        format!(
            "crossover={};vnd_order={};oscillation={};parent_selection={};mutation_mode={};\
             m_p={};m_l={};alpha={};gamma={};epsilon={};u_p={};delta={};tau={};I_r={};memory={};generations={}",
            self.crossover,
            self.vnd_order,
            self.oscillation,
            self.parent_selection,
            self.mutation_mode,
            self.mutation_prob,
            self.mutation_len,
            self.alpha,
            self.gamma,
            self.epsilon,
            self.window,
            self.delta,
            self.population_size,
            self.stagnation_limit,
            self.memory_size,
            self.max_generations,
        )
    }
}

/// Outcome of one search run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: Solution,
    pub objective: f64,
    /// Generation at which `best` was found (0 = initialization).
    pub best_generation: usize,
    pub best_time: f64,
    pub generations: usize,
    pub elapsed: f64,
    /// `(generation, objective)` at every improvement of the best.
    pub trace: Vec<(usize, f64)>,
    pub target_reached: bool,
    pub seed: u64,
    pub fingerprint: String,
    pub model: QModel,
    /// Final population (adaptive memory dropped).
    pub population: Population,
}

struct Runner<'a> {
    inst: &'a Instance,
    cfg: &'a SearchConfig,
    model: QModel,
    freq: DepotFrequency,
    pop: Population,
    best: Option<Solution>,
    best_generation: usize,
    best_time: f64,
    trace: Vec<(usize, f64)>,
    start: Instant,
    engine_rng: SearchRng,
    build_rng: SearchRng,
    cross_rng: SearchRng,
    ls_rng: SearchRng,
    var_rng: SearchRng,
}

impl<'a> Runner<'a> {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn out_of_time(&self) -> bool {
        self.cfg.time_limit.is_some_and(|t| self.elapsed() >= t)
    }

    fn target_reached(&self) -> bool {
        match (self.cfg.target, &self.best) {
            (Some(t), Some(b)) => b.objective() <= t + OBJ_EPS,
            _ => false,
        }
    }

    fn should_stop(&self) -> bool {
        self.out_of_time() || self.target_reached()
    }

    /// Local search followed by a feasibility fallback; records the result
    /// in the depot frequencies and the best solution. The caller stores it
    /// in the adaptive memory.
    fn improve(&mut self, s: Solution, generation: usize) -> Result<Option<Solution>> {
        let global = self.best.as_ref().map(|b| b.objective());
        let out = rl_sovnd(s, self.inst, &mut self.model, self.cfg, global, &mut self.ls_rng)?;
        let local = match out.best_feasible {
            Some(b) => Some(b),
            None => {
                let r = repair(out.final_current, self.inst, &self.freq, &mut self.var_rng);
                r.is_capacity_feasible(self.inst).then_some(r)
            }
        };
        let Some(local) = local.filter(|l| l.is_feasible(self.inst)) else {
            return Ok(None);
        };
        self.freq.record(&local);
        if self.best.as_ref().is_none_or(|b| local.objective() < b.objective() - crate::IMPROVE_EPS) {
            self.best = Some(local.clone());
            self.best_generation = generation;
            self.best_time = self.elapsed();
            self.trace.push((generation, local.objective()));
        }
        Ok(Some(local))
    }

    fn initialize(&mut self) -> Result<()> {
        let slots = self.cfg.population_size;
        let mut attempts = 0;
        while self.pop.len() < slots && attempts < slots * INIT_ATTEMPTS_PER_SLOT {
            attempts += 1;
            let s = if self.build_rng.gen_bool(0.5) {
                greedy_construct(self.inst, &mut self.build_rng)?
            } else {
                random_construct(self.inst, &mut self.build_rng)?
            };
            if let Some(local) = self.improve(s, 0)? {
                self.pop.remember(&local);
                self.pop.insert_unique(self.inst, local);
            }
            if self.should_stop() && !self.pop.is_empty() {
                break;
            }
        }
        if self.pop.is_empty() {
            return Err(Error::NoFeasibleSolution);
        }
        Ok(())
    }

    fn parents(&mut self) -> (usize, usize, usize) {
        let n = self.pop.len();
        if n == 1 {
            return (0, 0, 0);
        }
        let pick = sample(&mut self.engine_rng, n, 2);
        let (a, b) = (pick.index(0), pick.index(1));
        let c = match self.cfg.parent_selection {
            ParentSelection::ShortestLife => self.pop.youngest().expect("non-empty"),
            ParentSelection::Random => self.engine_rng.gen_range(0..n),
        };
        (a, b, c)
    }

    fn generation(&mut self, g: usize) -> Result<()> {
        let (a, b, c) = self.parents();
        let m = self.pop.members();
        let (sa, sb, sc) = (&m[a].solution, &m[b].solution, &m[c].solution);
        let child = match self.cfg.crossover {
            CrossoverKind::Mpeax3 => mpeax3(self.inst, sa, sb, sc, &mut self.cross_rng),
            CrossoverKind::Mpeax2 => mpeax_pair(self.inst, sa, sb, &mut self.cross_rng),
            CrossoverKind::Ox => ox_crossover(self.inst, sa, sb, &mut self.cross_rng),
        };
        let child = if child.is_feasible(self.inst) {
            child
        } else {
            repair(child, self.inst, &self.freq, &mut self.var_rng)
        };
        let child = mutate(child, self.inst, self.cfg, &mut self.var_rng);
        let before = self.best.as_ref().map(|b| b.objective());
        let local = self.improve(child, g)?;
        let improved = self.best.as_ref().map(|b| b.objective()) != before;
        if let Some(l) = local {
            self.pop.remember(&l);
            self.pop.update(self.inst, l);
        }
        if improved {
            self.pop.stagnation = 0;
        } else {
            self.pop.stagnation += 1;
        }
        if self.pop.stagnation > self.cfg.stagnation_limit {
            self.replace(g)?;
        }
        Ok(())
    }

    fn replace(&mut self, g: usize) -> Result<()> {
        let mut pop = std::mem::replace(&mut self.pop, Population::new(0, 0));
        let mut engine_rng = self.engine_rng.clone();
        let mut fresh_optima = Vec::new();
        let res = pop.replace_on_stagnation(self.inst, &mut engine_rng, &mut |_| {
            let s = random_construct(self.inst, &mut self.build_rng)?;
            let local = self.improve(s, g)?;
            if let Some(l) = &local {
                fresh_optima.push(l.clone());
            }
            Ok(local)
        });
        for s in &fresh_optima {
            pop.remember(s);
        }
        self.engine_rng = engine_rng;
        self.pop = pop;
        res
    }
}

/// Runs the memetic search on `inst` with `cfg`.
pub fn run(inst: &Instance, cfg: &SearchConfig) -> Result<RunResult> {
    cfg.validate()?;
    if inst.n_customers() < inst.fleet_size() {
        return Err(Error::TooFewCustomers {
            customers: inst.n_customers(),
            vehicles: inst.fleet_size(),
        });
    }
    let inst: Cow<Instance> = if inst.delta() == cfg.delta {
        Cow::Borrowed(inst)
    } else {
        Cow::Owned(inst.with_delta(cfg.delta))
    };
    let seed = cfg.seed;
    let mut r = Runner {
        inst: &inst,
        cfg,
        model: QModel::new(cfg.alpha, cfg.gamma, cfg.epsilon),
        freq: DepotFrequency::new(inst.n_depots()),
        pop: Population::new(cfg.population_size, cfg.memory_size),
        best: None,
        best_generation: 0,
        best_time: 0.0,
        trace: Vec::new(),
        start: Instant::now(),
        engine_rng: stream(seed, Stream::Engine),
        build_rng: stream(seed, Stream::Construction),
        cross_rng: stream(seed, Stream::Crossover),
        ls_rng: stream(seed, Stream::LocalSearch),
        var_rng: stream(seed, Stream::Variation),
    };
    r.initialize()?;
    let mut generations = 0;
    for g in 1..=cfg.max_generations {
        if r.should_stop() {
            break;
        }
        r.generation(g)?;
        generations = g;
    }
    let target_reached = r.target_reached();
    let best = r.best.take().ok_or(Error::NoFeasibleSolution)?;
    let elapsed = r.elapsed();
    let mut population = r.pop;
    population.clear_memory();
    Ok(RunResult {
        objective: best.objective(),
        best,
        best_generation: r.best_generation,
        best_time: r.best_time,
        generations,
        elapsed,
        trace: r.trace,
        target_reached,
        seed,
        fingerprint: cfg.fingerprint(),
        model: r.model,
        population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Customer, Depot};
    use crate::solution::tests::random_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(seed: u64) -> SearchConfig {
        SearchConfig {
            max_generations: 150,
            population_size: 6,
            stagnation_limit: 40,
            seed,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn defaults_match_table() {
        let c = SearchConfig::default();
        assert_eq!(
            (c.mutation_prob, c.mutation_len, c.alpha, c.gamma, c.epsilon),
            (0.1, 2, 0.2, 0.85, 0.7)
        );
        assert_eq!((c.window, c.delta, c.population_size, c.stagnation_limit), (4, 20, 20, 1000));
        assert_eq!((c.memory_size, c.max_generations), (3000, 5000));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = SearchConfig::default();
        c.target = Some(12.5);
        AblationPreset::Rlhea5.apply(&mut c);
        let back = SearchConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(SearchConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn presets_set_switches() {
        let mut c = SearchConfig::default();
        AblationPreset::Rlhea4.apply(&mut c);
        assert!(c.fingerprint().contains("vnd_order=fixed"));
        AblationPreset::Rlhea1.apply(&mut c);
        assert!(c.fingerprint().contains("crossover=ox"));
        assert!(c.fingerprint().contains("vnd_order=qlearning"));
        for p in AblationPreset::ALL {
            assert_eq!(p.as_str().parse::<AblationPreset>().unwrap(), *p);
        }
    }

    #[test]
    fn single_customer_is_solved_at_generation_zero() {
        let inst = Instance::new(
            "one",
            vec![Depot { id: 1, x: 0.0, y: 0.0 }, Depot { id: 2, x: 10.0, y: 0.0 }],
            vec![Customer { id: 1, x: 8.0, y: 0.0, demand: 1.0 }],
            5.0,
            1,
            1,
            20,
        )
        .unwrap();
        let res = run(&inst, &small_cfg(3)).unwrap();
        assert!((res.objective - 2.0).abs() < 1e-9);
        assert_eq!(res.best_generation, 0);
    }

    #[test]
    fn same_seed_same_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inst = random_instance(&mut rng, 4, 14, 3, 40.0);
        let a = run(&inst, &small_cfg(5)).unwrap();
        let b = run(&inst, &small_cfg(5)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best.to_text(&inst), b.best.to_text(&inst));
    }

    #[test]
    fn best_is_feasible_and_trace_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for variant in AblationPreset::ALL {
            let inst = random_instance(&mut rng, 4, 12, 3, 22.0);
            let mut cfg = small_cfg(7);
            cfg.max_generations = 60;
            variant.apply(&mut cfg);
            let Ok(res) = run(&inst, &cfg) else { continue };
            res.best.check_invariants(&inst).unwrap();
            assert!(res.best.is_feasible(&inst));
            let f = crate::solution::evaluate(&res.best, &inst).unwrap();
            assert!((f - res.objective).abs() < 1e-6);
            assert!(res.trace.windows(2).all(|w| w[1].1 < w[0].1 && w[1].0 >= w[0].0));
        }
    }

    #[test]
    fn zero_generations_returns_initial_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let inst = random_instance(&mut rng, 4, 12, 3, 1000.0);
        let mut cfg = small_cfg(2);
        cfg.max_generations = 0;
        let res = run(&inst, &cfg).unwrap();
        assert_eq!(res.generations, 0);
        assert_eq!(res.best_generation, 0);
        let pop_best = res.population.best().unwrap().objective();
        assert!((pop_best - res.objective).abs() < 1e-9);
    }

    #[test]
    fn target_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let inst = random_instance(&mut rng, 4, 12, 3, 1000.0);
        let mut cfg = small_cfg(2);
        cfg.target = Some(f64::MAX);
        let res = run(&inst, &cfg).unwrap();
        assert!(res.target_reached);
        assert_eq!(res.generations, 0);
    }
}
