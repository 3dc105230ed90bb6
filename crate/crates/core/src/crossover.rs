//! Directed multi-parent edge assembly crossover and the order-crossover
//! baseline.
//!
//! Solutions are viewed as directed graphs over the customers plus one
//! supernode standing for every depot. Each customer has one in-arc and one
//! out-arc; the supernode has `N_v` of each.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::instance::Instance;
use crate::solution::{Route, SegData, Solution};
use crate::sovnd::initial_beta;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    A,
    B,
}

/// Directed arc over customer indices `0..n_customers`, with `n_customers`
/// standing for the depot supernode.
pub type Arc = (u32, u32);

/// Closed walk alternating between arcs of the two parents.
#[derive(Debug, Clone, PartialEq)]
pub struct AbSequence {
    pub arcs: Vec<(Parent, u32, u32)>,
}

impl AbSequence {
    /// Customer nodes touched (the supernode excluded), sorted and unique.
    pub fn customer_nodes(&self, supernode: u32) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .arcs
            .iter()
            .flat_map(|&(_, a, b)| [a, b])
            .filter(|&x| x != supernode)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Arc structure of one parent.
struct Graph {
    succ: Vec<u32>,
    pred: Vec<u32>,
    /// Depot of the route leaving the supernode towards each customer.
    start_depot: Vec<usize>,
    /// Depot of the route returning to the supernode from each customer.
    end_depot: Vec<usize>,
}

impl Graph {
    fn of(sol: &Solution, inst: &Instance) -> Graph {
        let nd = inst.n_depots();
        let nc = inst.n_customers();
        let s = nc as u32;
        let mut g = Graph {
            succ: vec![NONE; nc],
            pred: vec![NONE; nc],
            start_depot: vec![usize::MAX; nc],
            end_depot: vec![usize::MAX; nc],
        };
        for r in sol.routes() {
            let cs = r.customers();
            let mut prev = s;
            for &c in cs {
                let k = (c - nd) as u32;
                g.pred[k as usize] = prev;
                if prev == s {
                    g.start_depot[k as usize] = r.depot();
                } else {
                    g.succ[prev as usize] = k;
                }
                prev = k;
            }
            g.succ[prev as usize] = s;
            g.end_depot[prev as usize] = r.depot();
        }
        g
    }

    fn has(&self, (x, y): Arc, s: u32) -> bool {
        if x == s {
            y != s && self.pred[y as usize] == s
        } else {
            self.succ[x as usize] == y
        }
    }

    fn arcs(&self, s: u32) -> Vec<Arc> {
        let mut out = Vec::with_capacity(self.succ.len() * 2);
        for (k, &p) in self.pred.iter().enumerate() {
            if p == s {
                out.push((s, k as u32));
            }
        }
        for (k, &n) in self.succ.iter().enumerate() {
            out.push((k as u32, n));
        }
        out
    }
}

/// Arcs of one parent that the other lacks, with depot supernode identity.
pub fn symmetric_difference(inst: &Instance, a: &Solution, b: &Solution) -> (Vec<Arc>, Vec<Arc>) {
    let s = inst.n_customers() as u32;
    let (ga, gb) = (Graph::of(a, inst), Graph::of(b, inst));
    let only_a = ga.arcs(s).into_iter().filter(|&arc| !gb.has(arc, s)).collect();
    let only_b = gb.arcs(s).into_iter().filter(|&arc| !ga.has(arc, s)).collect();
    (only_a, only_b)
}

/// Partitions the symmetric difference of `a` and `b` into AB-sequences.
///
/// The walk leaves a node along an unused `a`-arc, then moves backwards
/// along an unused `b`-arc entering the reached node, choosing uniformly at
/// random among the candidates, and closes when it is back at its start
/// ready to take another `a`-arc. Degree balance of the two parents at every
/// node (including the supernode) guarantees the walk never stalls.
pub fn build_ab_sequences<R: Rng + ?Sized>(inst: &Instance, a: &Solution, b: &Solution, rng: &mut R) -> Vec<AbSequence> {
    let (only_a, only_b) = symmetric_difference(inst, a, b);
    ab_sequences_from(inst.n_customers() + 1, only_a, only_b, rng)
}

fn ab_sequences_from<R: Rng + ?Sized>(n_nodes: usize, only_a: Vec<Arc>, only_b: Vec<Arc>, rng: &mut R) -> Vec<AbSequence> {
    let mut a_out: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    let mut b_in: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    for &(x, y) in &only_a {
        a_out[x as usize].push(y);
    }
    for &(x, y) in &only_b {
        b_in[y as usize].push(x);
    }
    let mut remaining = only_a.len();
    let mut seqs = Vec::new();
    while remaining > 0 {
        let starts: Vec<u32> = (0..n_nodes as u32).filter(|&v| !a_out[v as usize].is_empty()).collect();
        let start = *starts.choose(rng).expect("unused arcs remain");
        let mut arcs = Vec::new();
        let mut cur = start;
        loop {
            let list = &mut a_out[cur as usize];
            let y = list.swap_remove(rng.gen_range(0..list.len()));
            remaining -= 1;
            arcs.push((Parent::A, cur, y));
            let list = &mut b_in[y as usize];
            debug_assert!(!list.is_empty(), "degree balance violated");
            let z = list.swap_remove(rng.gen_range(0..list.len()));
            arcs.push((Parent::B, z, y));
            cur = z;
            if cur == start {
                break;
            }
        }
        seqs.push(AbSequence { arcs });
    }
    seqs
}

/// Bookkeeping of one pairwise crossover, for inspection and tests.
#[derive(Debug, Clone, Default)]
pub struct CrossoverTrace {
    pub sequences: Vec<AbSequence>,
    /// Indices into `sequences` forming the E-set.
    pub e_set: Vec<usize>,
    /// Arcs of the intermediate graph before sub-tour and depot repairs.
    pub pre_repair_arcs: Vec<Arc>,
    pub subtours: usize,
    pub depot_fixes: usize,
    /// Arcs added by sub-tour reconnection.
    pub introduced_arcs: Vec<Arc>,
}

/// Pairwise crossover: exchanges the arcs of a random E-set of `base` for
/// those of `donor`, then removes sub-tours and anchors mixed-depot routes.
/// The open-depot count is left for [`crate::variation::repair`].
pub fn mpeax_pair<R: Rng + ?Sized>(inst: &Instance, base: &Solution, donor: &Solution, rng: &mut R) -> Solution {
    mpeax_pair_traced(inst, base, donor, rng).0
}

pub fn mpeax_pair_traced<R: Rng + ?Sized>(
    inst: &Instance,
    base: &Solution,
    donor: &Solution,
    rng: &mut R,
) -> (Solution, CrossoverTrace) {
    let nd = inst.n_depots();
    let nc = inst.n_customers();
    let s = nc as u32;
    let mut trace = CrossoverTrace {
        sequences: build_ab_sequences(inst, base, donor, rng),
        ..Default::default()
    };
    if trace.sequences.is_empty() {
        trace.pre_repair_arcs = base.arcs(inst).into_iter().map(|(x, y)| (sup(x, s), sup(y, s))).collect();
        return (base.clone(), trace);
    }

    // E-set: a random central sequence and every sequence sharing a customer
    let central = rng.gen_range(0..trace.sequences.len());
    let mut in_central = vec![false; nc];
    for v in trace.sequences[central].customer_nodes(s) {
        in_central[v as usize] = true;
    }
    trace.e_set = (0..trace.sequences.len())
        .filter(|&k| k == central || trace.sequences[k].customer_nodes(s).iter().any(|&v| in_central[v as usize]))
        .collect();

    let gb = Graph::of(donor, inst);
    let mut g = Graph::of(base, inst);
    let mut depot_out: Vec<(usize, u32)> = (0..nc as u32)
        .filter(|&k| g.pred[k as usize] == s)
        .map(|k| (g.start_depot[k as usize], k))
        .collect();
    for &e in &trace.e_set {
        for &(p, x, y) in &trace.sequences[e].arcs {
            if p == Parent::A {
                if x == s {
                    depot_out.retain(|&(_, c)| c != y);
                } else {
                    g.succ[x as usize] = NONE;
                }
            }
        }
    }
    for &e in &trace.e_set {
        for &(p, x, y) in &trace.sequences[e].arcs {
            if p == Parent::B {
                if x == s {
                    depot_out.push((gb.start_depot[y as usize], y));
                } else {
                    g.succ[x as usize] = y;
                    if y == s {
                        g.end_depot[x as usize] = gb.end_depot[x as usize];
                    }
                }
            }
        }
    }
    depot_out.sort_unstable();
    trace.pre_repair_arcs = depot_out
        .iter()
        .map(|&(_, c)| (s, c))
        .chain(g.succ.iter().enumerate().map(|(k, &n)| (k as u32, n)))
        .collect();

    // decompose into depot paths and customer-only cycles
    let mut seen = vec![false; nc];
    let mut routes: Vec<(usize, Vec<usize>)> = Vec::with_capacity(depot_out.len());
    for &(d, first) in &depot_out {
        let mut cs = Vec::new();
        let mut cur = first;
        while cur != s {
            seen[cur as usize] = true;
            cs.push(cur as usize + nd);
            cur = g.succ[cur as usize];
        }
        let last = *cs.last().expect("non-empty path") - nd;
        let end = g.end_depot[last];
        let depot = if end != d && inst.dist(end, cs[0]) < inst.dist(d, cs[0]) {
            end
        } else {
            d
        };
        if end != d {
            trace.depot_fixes += 1;
        }
        routes.push((depot, cs));
    }
    let mut subtours = Vec::new();
    for k in 0..nc {
        if seen[k] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut cur = k as u32;
        while !seen[cur as usize] {
            seen[cur as usize] = true;
            cycle.push(cur as usize + nd);
            cur = g.succ[cur as usize];
        }
        subtours.push(cycle);
    }
    trace.subtours = subtours.len();

    let beta = initial_beta(base, inst);
    for cycle in subtours {
        let (added, r, at, rot) = best_reconnection(inst, &routes, &cycle, beta);
        let m = cycle.len();
        let opened: Vec<usize> = (0..m).map(|t| cycle[(rot + t) % m]).collect();
        routes[r].1.splice(at..at, opened);
        trace.introduced_arcs.extend(added.iter().map(|&(x, y)| (to_node(inst, x, s), to_node(inst, y, s))));
    }

    let mut open = vec![false; nd];
    for (d, _) in &routes {
        open[*d] = true;
    }
    let sol = Solution::from_parts(inst, open, routes);
    debug_assert!(sol.check_structure(inst).is_ok());
    (sol, trace)
}

fn sup(x: u32, s: u32) -> u32 {
    if x == crate::solution::DEPOT_NODE {
        s
    } else {
        x
    }
}

fn to_node(inst: &Instance, v: usize, s: u32) -> u32 {
    if inst.is_depot(v) {
        s
    } else {
        (v - inst.n_depots()) as u32
    }
}

/// Cheapest way to open `cycle` and splice it into a route: breaks arc
/// `cycle[rot-1] → cycle[rot]` and inserts before position `at` of route `r`.
/// Candidates whose two new arcs are both granular are preferred.
/// Returns the two new arcs (as vertices), route, position and rotation.
/// Candidate-list flag, objective increase, added arcs, route, insertion
/// position and cycle rotation.
type Reconnection = (bool, f64, [(usize, usize); 2], usize, usize, usize);

fn best_reconnection(
    inst: &Instance,
    routes: &[(usize, Vec<usize>)],
    cycle: &[usize],
    beta: f64,
) -> ([(usize, usize); 2], usize, usize, usize) {
    let m = cycle.len();
    let cap = inst.capacity();
    let cached: Vec<Route> = routes.iter().map(|(d, cs)| Route::new(inst, *d, cs.clone())).collect();
    let rotations: Vec<SegData> = (0..m)
        .map(|rot| {
            let mut acc = SegData::customer(cycle[rot], inst.demand(cycle[rot]));
            for t in 1..m {
                let v = cycle[(rot + t) % m];
                acc = acc.concat(SegData::customer(v, inst.demand(v)), inst);
            }
            acc
        })
        .collect();
    let mut best: Option<Reconnection> = None;
    for (r, route) in cached.iter().enumerate() {
        let n = route.len();
        let old = route.latency() + beta * (route.load() - cap).max(0.0);
        for at in 0..=n {
            let p = if at == 0 { route.depot() } else { route.customers()[at - 1] };
            let q = if at == n { route.depot() } else { route.customers()[at] };
            for (rot, seg) in rotations.iter().enumerate() {
                let y = cycle[rot];
                let x = cycle[(rot + m - 1) % m];
                let mut acc = SegData::depot(route.depot());
                if at > 0 {
                    acc = acc.concat(route.segment(0, at - 1, false), inst);
                }
                acc = acc.concat(*seg, inst);
                if at < n {
                    acc = acc.concat(route.segment(at, n - 1, false), inst);
                }
                let cost = acc.latency + beta * (acc.load - cap).max(0.0) - old;
                let granular = inst.is_granular(p, y) && (at == n || inst.is_granular(x, q));
                let better = match &best {
                    None => true,
                    Some((bg, bc, ..)) => (granular && !bg) || (granular == *bg && cost < *bc),
                };
                if better {
                    best = Some((granular, cost, [(p, y), (x, q)], r, at, rot));
                }
            }
        }
    }
    let (_, _, arcs, r, at, rot) = best.expect("at least one route");
    (arcs, r, at, rot)
}

/// Three-parent crossover: `sc` (the newest population member) is
/// recombined with the offspring of `sa` and `sb`.
pub fn mpeax3<R: Rng + ?Sized>(inst: &Instance, sa: &Solution, sb: &Solution, sc: &Solution, rng: &mut R) -> Solution {
    let mid = mpeax_pair(inst, sa, sb, rng);
    mpeax_pair(inst, &mid, sc, rng)
}

/// Giant tour: customers of every route in route order.
pub fn giant_tour(sol: &Solution) -> Vec<usize> {
    sol.routes().iter().flat_map(|r| r.customers().iter().copied()).collect()
}

/// Order crossover on permutations: keeps `p1[i..=j]` in place and fills the
/// other positions, starting after `j` and wrapping, with the remaining
/// elements in the order they appear in `p2` starting after `j`.
pub fn ox_tour(p1: &[usize], p2: &[usize], i: usize, j: usize) -> Vec<usize> {
    let n = p1.len();
    assert!(i <= j && j < n && p2.len() == n);
    let max = p1.iter().copied().max().unwrap_or(0);
    let mut kept = vec![false; max + 1];
    let mut child = vec![usize::MAX; n];
    for k in i..=j {
        child[k] = p1[k];
        kept[p1[k]] = true;
    }
    let mut pos = (j + 1) % n;
    for t in 0..n {
        let v = p2[(j + 1 + t) % n];
        if kept[v] {
            continue;
        }
        child[pos] = v;
        pos = (pos + 1) % n;
    }
    child
}

/// Order crossover baseline: OX on giant tours, split into `N_v`
/// contiguous chunks of near-equal size, each anchored at the open depot of
/// `p1` closest to its first customer.
pub fn ox_crossover<R: Rng + ?Sized>(inst: &Instance, p1: &Solution, p2: &Solution, rng: &mut R) -> Solution {
    let (t1, t2) = (giant_tour(p1), giant_tour(p2));
    let n = t1.len();
    let i = rng.gen_range(0..n);
    let j = rng.gen_range(i..n);
    let tour = ox_tour(&t1, &t2, i, j);
    let nv = inst.fleet_size();
    let open = p1.open_depots();
    let mut routes = Vec::with_capacity(nv);
    let mut start = 0;
    for k in 0..nv {
        let len = n / nv + usize::from(k < n % nv);
        let cs = tour[start..start + len].to_vec();
        start += len;
        let depot = *open
            .iter()
            .min_by(|&&a, &&b| inst.dist(a, cs[0]).total_cmp(&inst.dist(b, cs[0])))
            .expect("open depot");
        routes.push((depot, cs));
    }
    Solution::from_parts(inst, p1.open_flags().to_vec(), routes)
}
