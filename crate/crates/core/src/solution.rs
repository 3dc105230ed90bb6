//! Solution representation, latency objective, penalized objective and
//! solution distances.
//!
//! A route's latency is the sum of its customers' arrival times, measured
//! from the depot along the route. The arc back to the depot is free.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Sentinel used for the merged depot node in arc signatures.
pub const DEPOT_NODE: u32 = u32::MAX;

/// Concatenation summary of a route segment.
///
/// `latency` sums the arrival times of the segment's customers measured from
/// its first vertex; `duration` is the travel time from first to last vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegData {
    pub first: usize,
    pub last: usize,
    pub count: usize,
    pub duration: f64,
    pub latency: f64,
    pub load: f64,
}

impl SegData {
    #[inline]
    pub fn depot(d: usize) -> Self {
        SegData {
            first: d,
            last: d,
            count: 0,
            duration: 0.0,
            latency: 0.0,
            load: 0.0,
        }
    }

    #[inline]
    pub fn customer(v: usize, demand: f64) -> Self {
        SegData {
            first: v,
            last: v,
            count: 1,
            duration: 0.0,
            latency: 0.0,
            load: demand,
        }
    }

    #[inline]
    pub fn reversed(self) -> Self {
        SegData {
            first: self.last,
            last: self.first,
            count: self.count,
            duration: self.duration,
            latency: self.count as f64 * self.duration - self.latency,
            load: self.load,
        }
    }

    #[inline]
    pub fn concat(self, next: SegData, inst: &Instance) -> Self {
        let hop = self.duration + inst.dist(self.last, next.first);
        SegData {
            first: self.first,
            last: next.last,
            count: self.count + next.count,
            duration: hop + next.duration,
            latency: self.latency + next.count as f64 * hop + next.latency,
            load: self.load + next.load,
        }
    }
}

/// A vehicle route anchored at a depot, with cached prefix data.
#[derive(Debug, Clone)]
pub struct Route {
    depot: usize,
    customers: Vec<usize>,
    arrival: Vec<f64>,
    cum_arrival: Vec<f64>,
    cum_load: Vec<f64>,
    latency: f64,
    load: f64,
}

impl PartialEq for Route {
    fn eq(&self, other: &Self) -> bool {
        self.depot == other.depot && self.customers == other.customers
    }
}

impl Route {
    pub fn new(inst: &Instance, depot: usize, customers: Vec<usize>) -> Self {
        let mut r = Route {
            depot,
            customers,
            arrival: Vec::new(),
            cum_arrival: Vec::new(),
            cum_load: Vec::new(),
            latency: 0.0,
            load: 0.0,
        };
        r.refresh(inst);
        r
    }

    fn refresh(&mut self, inst: &Instance) {
        let n = self.customers.len();
        self.arrival.clear();
        self.cum_arrival.clear();
        self.cum_load.clear();
        self.arrival.reserve(n);
        self.cum_arrival.reserve(n);
        self.cum_load.reserve(n);
        let (mut t, mut total, mut load) = (0.0, 0.0, 0.0);
        let mut prev = self.depot;
        for &c in &self.customers {
            t += inst.dist(prev, c);
            total += t;
            load += inst.demand(c);
            self.arrival.push(t);
            self.cum_arrival.push(total);
            self.cum_load.push(load);
            prev = c;
        }
        self.latency = total;
        self.load = load;
    }

    pub fn depot(&self) -> usize {
        self.depot
    }

    pub fn customers(&self) -> &[usize] {
        &self.customers
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    /// Sum of arrival times on this route.
    pub fn latency(&self) -> f64 {
        self.latency
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    /// Arrival time at the customer in position `i`.
    pub fn arrival(&self, i: usize) -> f64 {
        self.arrival[i]
    }

    /// Summary of positions `from..=to`, optionally traversed backwards.
    #[inline]
    pub fn segment(&self, from: usize, to: usize, reversed: bool) -> SegData {
        debug_assert!(from <= to && to < self.customers.len());
        let count = to - from + 1;
        let t0 = self.arrival[from];
        let before = if from == 0 { 0.0 } else { self.cum_arrival[from - 1] };
        let load_before = if from == 0 { 0.0 } else { self.cum_load[from - 1] };
        let seg = SegData {
            first: self.customers[from],
            last: self.customers[to],
            count,
            duration: self.arrival[to] - t0,
            latency: self.cum_arrival[to] - before - count as f64 * t0,
            load: self.cum_load[to] - load_before,
        };
        if reversed {
            seg.reversed()
        } else {
            seg
        }
    }
}

/// LLRP solution: the open-depot set and exactly `N_v` routes.
#[derive(Debug, Clone)]
pub struct Solution {
    open: Vec<bool>,
    routes: Vec<Route>,
    position: Vec<(u32, u32)>,
    objective: f64,
}

impl PartialEq for Solution {
    fn eq(&self, other: &Self) -> bool {
        self.open == other.open && self.routes == other.routes
    }
}

impl Solution {
    /// Builds a solution from depot vertices and `(depot, customers)` routes.
    ///
    /// Checks that every customer is served exactly once, that there are
    /// `N_v` non-empty routes and that every route's depot is open. The open
    /// count may differ from `N_d` (see [`Solution::depot_count_ok`]).
    pub fn new(inst: &Instance, open: &[usize], routes: Vec<(usize, Vec<usize>)>) -> Result<Self> {
        let mut flags = vec![false; inst.n_depots()];
        for &d in open {
            if !inst.is_depot(d) {
                return Err(Error::InvalidSolution(format!("vertex {d} is not a depot")));
            }
            flags[d] = true;
        }
        let sol = Self::from_parts(inst, flags, routes);
        sol.check_structure(inst)?;
        Ok(sol)
    }

    /// Builds without validating; callers uphold the structure.
    pub(crate) fn from_parts(inst: &Instance, open: Vec<bool>, routes: Vec<(usize, Vec<usize>)>) -> Self {
        let routes: Vec<Route> = routes
            .into_iter()
            .map(|(d, cs)| Route::new(inst, d, cs))
            .collect();
        let mut sol = Solution {
            open,
            routes,
            position: vec![(u32::MAX, u32::MAX); inst.n_vertices()],
            objective: 0.0,
        };
        for r in 0..sol.routes.len() {
            sol.reindex(r);
        }
        sol.recompute_objective();
        sol
    }

    fn reindex(&mut self, r: usize) {
        for (i, &c) in self.routes[r].customers.iter().enumerate() {
            self.position[c] = (r as u32, i as u32);
        }
    }

    fn recompute_objective(&mut self) {
        self.objective = self.routes.iter().map(|r| r.latency).sum();
    }

    /// Verifies the structural invariants other than the open-depot count.
    pub fn check_structure(&self, inst: &Instance) -> Result<()> {
        if self.routes.len() != inst.fleet_size() {
            return Err(Error::InvalidSolution(format!(
                "{} routes, fleet size is {}",
                self.routes.len(),
                inst.fleet_size()
            )));
        }
        let mut seen = vec![false; inst.n_vertices()];
        for (k, r) in self.routes.iter().enumerate() {
            if !inst.is_depot(r.depot) {
                return Err(Error::InvalidSolution(format!("route {k} anchored at a customer")));
            }
            if !self.open[r.depot] {
                return Err(Error::InvalidSolution(format!(
                    "route {k} uses closed depot {}",
                    inst.vertex_id(r.depot)
                )));
            }
            if r.customers.is_empty() {
                return Err(Error::InvalidSolution(format!("route {k} is empty")));
            }
            for &c in &r.customers {
                if c >= inst.n_vertices() || inst.is_depot(c) {
                    return Err(Error::InvalidSolution(format!("route {k} visits non-customer {c}")));
                }
                if seen[c] {
                    return Err(Error::InvalidSolution(format!(
                        "customer {} visited twice",
                        inst.vertex_id(c)
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(c) = inst.customer_vertices().find(|&c| !seen[c]) {
            return Err(Error::InvalidSolution(format!(
                "customer {} not visited",
                inst.vertex_id(c)
            )));
        }
        Ok(())
    }

    /// Verifies every invariant, including `|open| = N_d`.
    pub fn check_invariants(&self, inst: &Instance) -> Result<()> {
        self.check_structure(inst)?;
        if !self.depot_count_ok(inst) {
            return Err(Error::InvalidSolution(format!(
                "{} open depots, limit is {}",
                self.open_count(),
                inst.max_open_depots()
            )));
        }
        Ok(())
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route(&self, r: usize) -> &Route {
        &self.routes[r]
    }

    pub fn is_open(&self, depot: usize) -> bool {
        self.open[depot]
    }

    pub fn open_flags(&self) -> &[bool] {
        &self.open
    }

    pub fn open_depots(&self) -> Vec<usize> {
        (0..self.open.len()).filter(|&d| self.open[d]).collect()
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn depot_count_ok(&self, inst: &Instance) -> bool {
        self.open_count() == inst.max_open_depots()
    }

    /// `(route, position)` of a customer vertex.
    #[inline]
    pub fn position(&self, customer: usize) -> (usize, usize) {
        let (r, i) = self.position[customer];
        (r as usize, i as usize)
    }

    /// Cached latency objective `f`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn excess(&self, inst: &Instance) -> f64 {
        self.routes
            .iter()
            .map(|r| (r.load - inst.capacity()).max(0.0))
            .sum()
    }

    pub fn is_capacity_feasible(&self, inst: &Instance) -> bool {
        self.routes.iter().all(|r| r.load <= inst.capacity())
    }

    /// Capacity-feasible with exactly `N_d` open depots.
    pub fn is_feasible(&self, inst: &Instance) -> bool {
        self.is_capacity_feasible(inst) && self.depot_count_ok(inst)
    }

    /// Penalized objective `F = f + β·Σ max(0, load − P)`.
    pub fn penalized(&self, inst: &Instance, beta: f64) -> f64 {
        self.objective + beta * self.excess(inst)
    }

    /// Routes anchored at each depot.
    pub fn routes_by_depot(&self, inst: &Instance) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); inst.n_depots()];
        for (k, r) in self.routes.iter().enumerate() {
            by[r.depot].push(k);
        }
        by
    }

    /// Replaces the listed routes and flips open flags, then refreshes caches.
    pub(crate) fn replace_routes(
        &mut self,
        inst: &Instance,
        updates: Vec<(usize, usize, Vec<usize>)>,
        open_changes: &[(usize, bool)],
    ) {
        for &(d, flag) in open_changes {
            self.open[d] = flag;
        }
        let touched: Vec<usize> = updates.iter().map(|u| u.0).collect();
        for (r, depot, customers) in updates {
            let route = &mut self.routes[r];
            route.depot = depot;
            route.customers = customers;
            route.refresh(inst);
        }
        for r in touched {
            self.reindex(r);
        }
        self.recompute_objective();
    }

    /// `(route, depot, customers)` triples, consuming the solution.
    pub fn into_parts(self) -> (Vec<bool>, Vec<(usize, Vec<usize>)>) {
        let routes = self.routes.into_iter().map(|r| (r.depot, r.customers)).collect();
        (self.open, routes)
    }

    /// Predecessor of every customer in the merged-depot graph, plus the set
    /// of customers that return to a depot. Two solutions share arc
    /// `(p, c)` iff their signatures agree at `c`.
    pub fn arc_signature(&self, inst: &Instance) -> ArcSignature {
        let nd = inst.n_depots();
        let nc = inst.n_customers();
        let mut pred = vec![DEPOT_NODE; nc];
        let mut last = vec![false; nc];
        for r in &self.routes {
            let mut prev = DEPOT_NODE;
            for &c in &r.customers {
                pred[c - nd] = prev;
                prev = (c - nd) as u32;
            }
            if let Some(&c) = r.customers.last() {
                last[c - nd] = true;
            }
        }
        ArcSignature { pred, last }
    }

    /// Directed arcs with depots merged: `(from, to)` over customer indices
    /// (`0..n_customers`) and [`DEPOT_NODE`].
    pub fn arcs(&self, inst: &Instance) -> Vec<(u32, u32)> {
        let nd = inst.n_depots();
        let mut arcs = Vec::with_capacity(inst.n_customers() + self.routes.len());
        for r in &self.routes {
            let mut prev = DEPOT_NODE;
            for &c in &r.customers {
                let cur = (c - nd) as u32;
                arcs.push((prev, cur));
                prev = cur;
            }
            arcs.push((prev, DEPOT_NODE));
        }
        arcs
    }

    /// Writes the text solution format.
    pub fn to_text(&self, inst: &Instance) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "INSTANCE {}", inst.name());
        let _ = writeln!(out, "OBJECTIVE {:.2}", self.objective);
        let ids: Vec<String> = self
            .open_depots()
            .into_iter()
            .map(|d| inst.vertex_id(d).to_string())
            .collect();
        let _ = writeln!(out, "OPEN_DEPOTS {}", ids.join(" "));
        for r in &self.routes {
            let cs: Vec<String> = r.customers.iter().map(|&c| inst.vertex_id(c).to_string()).collect();
            let _ = writeln!(out, "ROUTE {} : {}", inst.vertex_id(r.depot), cs.join(" "));
        }
        out
    }

    /// Rebuilds a solution from a parsed solution file.
    pub fn from_file_data(inst: &Instance, data: &SolutionFile) -> Result<Self> {
        let open = data
            .open_depots
            .iter()
            .map(|&id| {
                inst.depot_by_id(id)
                    .ok_or_else(|| Error::InvalidSolution(format!("unknown depot id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let routes = data
            .routes
            .iter()
            .map(|(d, cs)| {
                let depot = inst
                    .depot_by_id(*d)
                    .ok_or_else(|| Error::InvalidSolution(format!("unknown depot id {d}")))?;
                let cs = cs
                    .iter()
                    .map(|&id| {
                        inst.customer_by_id(id)
                            .ok_or_else(|| Error::InvalidSolution(format!("unknown customer id {id}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((depot, cs))
            })
            .collect::<Result<Vec<_>>>()?;
        Solution::new(inst, &open, routes)
    }
}

/// Compact arc identity of a solution; see [`Solution::arc_signature`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcSignature {
    pred: Vec<u32>,
    last: Vec<bool>,
}

impl ArcSignature {
    /// Number of arcs (`n_customers + n_routes`).
    pub fn arc_count(&self) -> usize {
        self.pred.len() + self.last.iter().filter(|&&l| l).count()
    }

    pub fn common_arcs(&self, other: &ArcSignature) -> usize {
        let into = self
            .pred
            .iter()
            .zip(&other.pred)
            .filter(|(a, b)| a == b)
            .count();
        let back = self
            .last
            .iter()
            .zip(&other.last)
            .filter(|(a, b)| **a && **b)
            .count();
        into + back
    }

    /// Number of this signature's arcs missing from `other`.
    pub fn distance(&self, other: &ArcSignature) -> usize {
        self.arc_count() - self.common_arcs(other)
    }
}

/// Non-common directed arcs between two solutions (depots merged).
pub fn solution_distance(inst: &Instance, a: &Solution, b: &Solution) -> usize {
    a.arc_signature(inst).distance(&b.arc_signature(inst))
}

/// Minimum distance from `s` to any member of `others`.
pub fn population_distance<'a>(
    inst: &Instance,
    s: &Solution,
    others: impl IntoIterator<Item = &'a Solution>,
) -> Result<usize> {
    let sig = s.arc_signature(inst);
    others
        .into_iter()
        .map(|o| sig.distance(&o.arc_signature(inst)))
        .min()
        .ok_or(Error::EmptyComparisonSet)
}

/// Objective recomputed from scratch by walking every route.
pub fn evaluate(sol: &Solution, inst: &Instance) -> Result<f64> {
    sol.check_structure(inst)?;
    let mut total = 0.0;
    for r in sol.routes() {
        let mut t = 0.0;
        let mut prev = r.depot();
        for &c in r.customers() {
            t += inst.dist(prev, c);
            total += t;
            prev = c;
        }
    }
    Ok(total)
}

/// Penalized objective recomputed from scratch.
pub fn evaluate_extended(sol: &Solution, inst: &Instance, beta: f64) -> Result<f64> {
    let f = evaluate(sol, inst)?;
    let violation: f64 = sol
        .routes()
        .iter()
        .map(|r| {
            let load: f64 = r.customers().iter().map(|&c| inst.demand(c)).sum();
            (load - inst.capacity()).max(0.0)
        })
        .sum();
    Ok(f + beta * violation)
}

/// Raw contents of a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub instance: String,
    pub objective: f64,
    pub open_depots: Vec<u32>,
    pub routes: Vec<(u32, Vec<u32>)>,
}

impl SolutionFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message,
        };
        let mut instance = None;
        let mut objective = None;
        let mut open_depots = None;
        let mut routes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let ids = |s: &str| -> Result<Vec<u32>> {
                s.split_whitespace()
                    .map(|t| t.parse().map_err(|_| err(i + 1, format!("bad id `{t}`"))))
                    .collect()
            };
            match key {
                "INSTANCE" => instance = Some(rest.to_string()),
                "OBJECTIVE" => {
                    objective = Some(
                        rest.parse::<f64>()
                            .map_err(|_| err(i + 1, format!("bad objective `{rest}`")))?,
                    )
                }
                "OPEN_DEPOTS" => open_depots = Some(ids(rest)?),
                "ROUTE" => {
                    let (d, cs) = rest
                        .split_once(':')
                        .ok_or_else(|| err(i + 1, "route line needs `depot : customers`".into()))?;
                    let d = d
                        .trim()
                        .parse()
                        .map_err(|_| err(i + 1, format!("bad depot id `{}`", d.trim())))?;
                    routes.push((d, ids(cs)?));
                }
                other => return Err(err(i + 1, format!("unknown record `{other}`"))),
            }
        }
        Ok(SolutionFile {
            instance: instance.ok_or_else(|| err(1, "missing INSTANCE".into()))?,
            objective: objective.ok_or_else(|| err(1, "missing OBJECTIVE".into()))?,
            open_depots: open_depots.ok_or_else(|| err(1, "missing OPEN_DEPOTS".into()))?,
            routes,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }
}

/// Strategic-oscillation penalty controller.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub beta: f64,
    pub feasible_run: usize,
    pub infeasible_run: usize,
    pub window: usize,
}

pub const BETA_MIN: f64 = 1e-9;
pub const BETA_MAX: f64 = 1e12;

impl PenaltyState {
    pub fn new(beta: f64, window: usize) -> Self {
        PenaltyState {
            beta: beta.clamp(BETA_MIN, BETA_MAX),
            feasible_run: 0,
            infeasible_run: 0,
            window: window.max(1),
        }
    }

    /// Records an accepted solution. Returns true when a counter saturated.
    pub fn record(&mut self, feasible: bool) -> bool {
        if feasible {
            self.infeasible_run = 0;
            self.feasible_run += 1;
        } else {
            self.feasible_run = 0;
            self.infeasible_run += 1;
        }
        self.saturated()
    }

    pub fn saturated(&self) -> bool {
        self.feasible_run == self.window || self.infeasible_run == self.window
    }

    /// Multiplies (infeasible run) or divides (feasible run) β by
    /// `1.5 + coin`, with the coin drawn from `rng`.
    pub fn adjust<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let coin = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        self.adjust_with_coin(coin)
    }

    pub fn adjust_with_coin(&mut self, coin: f64) -> Result<()> {
        if self.infeasible_run == self.window {
            self.beta *= 1.5 + coin;
            self.infeasible_run = 0;
        } else if self.feasible_run == self.window {
            self.beta /= 1.5 + coin;
            self.feasible_run = 0;
        } else {
            return Err(Error::PenaltyNotSaturated);
        }
        self.beta = self.beta.clamp(BETA_MIN, BETA_MAX);
        Ok(())
    }
}
