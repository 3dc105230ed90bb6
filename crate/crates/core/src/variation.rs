//! Offspring repair (depot count, then capacity) and mutation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::{MutationMode, SearchConfig};
use crate::instance::Instance;
use crate::neighborhoods::{apply, first_improving_two_opt_star};
use crate::solution::Solution;

/// How often each depot was open in local-search outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepotFrequency {
    counts: Vec<u64>,
}

impl DepotFrequency {
    pub fn new(n_depots: usize) -> Self {
        DepotFrequency {
            counts: vec![0; n_depots],
        }
    }

    pub fn record(&mut self, sol: &Solution) {
        for (d, &open) in sol.open_flags().iter().enumerate() {
            if open {
                self.counts[d] += 1;
            }
        }
    }

    pub fn count(&self, depot: usize) -> u64 {
        self.counts[depot]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `depots` sorted by decreasing frequency, ties by index.
    pub fn ranked(&self, depots: &[usize]) -> Vec<usize> {
        let mut v = depots.to_vec();
        v.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        v
    }
}

/// Multiplier of the capacity penalty used while repairing.
pub const REPAIR_PENALTY_SCALE: f64 = 1000.0;

/// Restores `|open| = N_d`, then applies improving 2-opt* moves under a
/// large capacity penalty until the solution is feasible or no move helps.
pub fn repair<R: Rng + ?Sized>(s: Solution, inst: &Instance, freq: &DepotFrequency, rng: &mut R) -> Solution {
    let mut s = fix_depot_count(s, inst, freq, rng);
    if s.is_capacity_feasible(inst) {
        return s;
    }
    let total = inst.total_demand();
    let beta = if total > 0.0 {
        REPAIR_PENALTY_SCALE * s.objective() / total
    } else {
        REPAIR_PENALTY_SCALE
    };
    while !s.is_capacity_feasible(inst) {
        match first_improving_two_opt_star(&s, inst, beta, rng) {
            Some(mv) => {
                apply(&mut s, inst, &mv);
            }
            None => break,
        }
    }
    s
}

/// Depot step of [`repair`].
pub fn fix_depot_count<R: Rng + ?Sized>(s: Solution, inst: &Instance, freq: &DepotFrequency, rng: &mut R) -> Solution {
    let nd = inst.max_open_depots();
    let open = s.open_depots();
    if open.len() == nd {
        return s;
    }
    let (flags, routes) = s.into_parts();
    let mut flags = flags;
    if open.len() > nd {
        let keep: Vec<usize> = if rng.gen_bool(0.5) {
            freq.ranked(&open)[..nd].to_vec()
        } else {
            open.choose_multiple(rng, nd).copied().collect()
        };
        for f in flags.iter_mut() {
            *f = false;
        }
        for &d in &keep {
            flags[d] = true;
        }
        let routes = routes
            .into_iter()
            .map(|(d, cs)| {
                if flags[d] {
                    (d, cs)
                } else {
                    let first = cs[0];
                    let nd = *keep
                        .iter()
                        .min_by(|&&a, &&b| inst.dist(a, first).total_cmp(&inst.dist(b, first)).then(a.cmp(&b)))
                        .expect("N_d >= 1");
                    (nd, cs)
                }
            })
            .collect();
        Solution::from_parts(inst, flags, routes)
    } else {
        let closed: Vec<usize> = (0..inst.n_depots()).filter(|&d| !flags[d]).collect();
        for d in freq.ranked(&closed).into_iter().take(nd - open.len()) {
            flags[d] = true;
        }
        Solution::from_parts(inst, flags, routes)
    }
}

/// Replaces open depot `closed` by closed depot `opened` on every route.
pub fn depot_swap(s: Solution, inst: &Instance, closed: usize, opened: usize) -> Solution {
    let (mut flags, routes) = s.into_parts();
    flags[closed] = false;
    flags[opened] = true;
    let routes = routes
        .into_iter()
        .map(|(d, cs)| if d == closed { (opened, cs) } else { (d, cs) })
        .collect();
    Solution::from_parts(inst, flags, routes)
}

/// Cyclic exchange of the customers at `picks[k] = (route, position)`: the
/// customer of pick `k` moves to the slot of pick `k+1`.
pub fn ejection_chain(s: Solution, inst: &Instance, picks: [(usize, usize); 3]) -> Solution {
    let (flags, mut routes) = s.into_parts();
    let vals: Vec<usize> = picks.iter().map(|&(r, i)| routes[r].1[i]).collect();
    for k in 0..3 {
        let (r, i) = picks[(k + 1) % 3];
        routes[r].1[i] = vals[k];
    }
    Solution::from_parts(inst, flags, routes)
}

fn random_depot_swap<R: Rng + ?Sized>(s: Solution, inst: &Instance, rng: &mut R) -> Solution {
    let open = s.open_depots();
    let closed: Vec<usize> = (0..inst.n_depots()).filter(|&d| !s.is_open(d)).collect();
    match (open.choose(rng), closed.choose(rng)) {
        (Some(&a), Some(&b)) => depot_swap(s, inst, a, b),
        _ => s,
    }
}

fn random_ejection_chain<R: Rng + ?Sized>(s: Solution, inst: &Instance, rng: &mut R) -> Solution {
    let n = s.routes().len();
    if n < 3 {
        return s;
    }
    let rs: Vec<usize> = rand::seq::index::sample(rng, n, 3).into_vec();
    let picks = [0, 1, 2].map(|k| (rs[k], rng.gen_range(0..s.route(rs[k]).len())));
    ejection_chain(s, inst, picks)
}

/// With probability `m_p`, applies `m_l` rounds of depot swap and/or
/// ejection chain; otherwise returns `s` unchanged.
pub fn mutate<R: Rng + ?Sized>(s: Solution, inst: &Instance, cfg: &SearchConfig, rng: &mut R) -> Solution {
    if !rng.gen_bool(cfg.mutation_prob.clamp(0.0, 1.0)) {
        return s;
    }
    let mut s = s;
    for _ in 0..cfg.mutation_len {
        s = match cfg.mutation_mode {
            MutationMode::OneOf => {
                if rng.gen_bool(0.5) {
                    random_depot_swap(s, inst, rng)
                } else {
                    random_ejection_chain(s, inst, rng)
                }
            }
            MutationMode::Both => {
                let s = random_depot_swap(s, inst, rng);
                random_ejection_chain(s, inst, rng)
            }
        };
    }
    s
}
