//! Population of local optima: construction, quality-and-distance based
//! updating, and stagnation-triggered partial replacement from an adaptive
//! memory of recent local optima.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::{ArcSignature, Solution};
use crate::OBJ_EPS;

/// Weight of quality against distance in the fitness.
pub const PSI: f64 = 0.55;

#[derive(Debug, Clone)]
pub struct Member {
    pub solution: Solution,
    pub signature: ArcSignature,
    /// Insertion order; larger is younger.
    pub stamp: u64,
}

#[derive(Debug, Clone)]
pub struct Population {
    members: Vec<Member>,
    capacity: usize,
    memory: VecDeque<Solution>,
    memory_size: usize,
    next_stamp: u64,
    /// Generations since the best solution last improved.
    pub stagnation: usize,
}

impl Population {
    pub fn new(capacity: usize, memory_size: usize) -> Self {
        Population {
            members: Vec::with_capacity(capacity + 1),
            capacity,
            memory: VecDeque::with_capacity(memory_size.min(4096)),
            memory_size,
            next_stamp: 0,
            stagnation: 0,
        }
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn memory(&self) -> &VecDeque<Solution> {
        &self.memory
    }

    /// Index of the member with the lowest objective (oldest on ties).
    pub fn best_index(&self) -> Option<usize> {
        (0..self.members.len()).min_by(|&a, &b| {
            let (x, y) = (&self.members[a], &self.members[b]);
            x.solution
                .objective()
                .total_cmp(&y.solution.objective())
                .then(x.stamp.cmp(&y.stamp))
        })
    }

    pub fn best(&self) -> Option<&Solution> {
        self.best_index().map(|k| &self.members[k].solution)
    }

    /// Most recently inserted member.
    pub fn youngest(&self) -> Option<usize> {
        (0..self.members.len()).max_by_key(|&k| self.members[k].stamp)
    }

    pub fn clear_memory(&mut self) {
        self.memory = VecDeque::new();
    }

    /// Appends a local optimum to the adaptive memory, dropping the oldest
    /// entry when full.
    pub fn remember(&mut self, s: &Solution) {
        if self.memory_size == 0 {
            return;
        }
        if self.memory.len() == self.memory_size {
            self.memory.pop_front();
        }
        self.memory.push_back(s.clone());
    }

    /// Zero arc distance alone is not enough: the distance merges depots,
    /// so routes moved to another depot look identical.
    fn is_clone(&self, sig: &ArcSignature, f: f64) -> bool {
        self.members
            .iter()
            .any(|m| m.signature.distance(sig) == 0 && (m.solution.objective() - f).abs() <= OBJ_EPS)
    }

    fn push(&mut self, s: Solution, sig: ArcSignature) {
        self.members.push(Member {
            solution: s,
            signature: sig,
            stamp: self.next_stamp,
        });
        self.next_stamp += 1;
    }

    /// Adds `s` without eviction if it is not a clone and there is room.
    pub fn insert_unique(&mut self, inst: &Instance, s: Solution) -> bool {
        if self.members.len() >= self.capacity {
            return false;
        }
        let sig = s.arc_signature(inst);
        if self.is_clone(&sig, s.objective()) {
            return false;
        }
        self.push(s, sig);
        true
    }

    /// Minimum distance from member `k` to every other member.
    fn pdist(&self, k: usize) -> Option<usize> {
        let sig = &self.members[k].signature;
        self.members
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, m)| sig.distance(&m.signature))
            .min()
    }

    /// Fitness of every member: `ψ·quality + (1−ψ)·diversity`, each term
    /// min-max normalized and set to 0.5 when degenerate.
    pub fn fitness(&self) -> Vec<f64> {
        let f: Vec<f64> = self.members.iter().map(|m| m.solution.objective()).collect();
        let pd: Vec<f64> = (0..self.members.len())
            .map(|k| self.pdist(k).unwrap_or(0) as f64)
            .collect();
        fitness_values(&f, &pd, PSI)
    }

    /// Inserts `s` unless it clones a member; when over capacity, evicts the
    /// member of lowest fitness (oldest on ties). Returns whether `s` stayed.
    pub fn update(&mut self, inst: &Instance, s: Solution) -> bool {
        let sig = s.arc_signature(inst);
        if self.is_clone(&sig, s.objective()) {
            return false;
        }
        self.push(s, sig);
        if self.members.len() <= self.capacity {
            return true;
        }
        let fit = self.fitness();
        let worst = (0..self.members.len())
            .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(self.members[a].stamp.cmp(&self.members[b].stamp)))
            .expect("non-empty");
        let stayed = worst != self.members.len() - 1;
        self.members.remove(worst);
        stayed
    }

    /// Removes `⌊τ/2⌋` random members other than the best, then refills
    /// each vacancy with either a fresh solution from `fresh` or a random
    /// entry of the older half of the memory (equal odds). Clones are
    /// rejected; after a bounded number of tries a vacancy stays open.
    pub fn replace_on_stagnation<R: Rng + ?Sized>(
        &mut self,
        inst: &Instance,
        rng: &mut R,
        fresh: &mut dyn FnMut(&mut R) -> Result<Option<Solution>>,
    ) -> Result<()> {
        let Some(best) = self.best_index() else {
            return Ok(());
        };
        let best_stamp = self.members[best].stamp;
        let mut others: Vec<usize> = (0..self.members.len()).filter(|&k| k != best).collect();
        others.shuffle(rng);
        let mut remove: Vec<usize> = others.into_iter().take(self.capacity / 2).collect();
        remove.sort_unstable_by(|a, b| b.cmp(a));
        for k in remove {
            self.members.remove(k);
        }
        debug_assert!(self.members.iter().any(|m| m.stamp == best_stamp));
        let mut tries = 0;
        let limit = 20 * self.capacity.max(1);
        while self.members.len() < self.capacity && tries < limit {
            tries += 1;
            let older = self.memory.len() / 2;
            let candidate = if older > 0 && rng.gen_bool(0.5) {
                Some(self.memory[rng.gen_range(0..older)].clone())
            } else {
                fresh(rng)?
            };
            if let Some(c) = candidate {
                self.insert_unique(inst, c);
            }
        }
        self.stagnation = 0;
        Ok(())
    }

    /// Writes `member,f,pdist,age` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["member", "f", "pdist", "age"])?;
        let newest = self.next_stamp;
        for (k, m) in self.members.iter().enumerate() {
            w.write_record([
                k.to_string(),
                format!("{:.6}", m.solution.objective()),
                self.pdist(k).map_or(String::new(), |d| d.to_string()),
                (newest - m.stamp - 1).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalized fitness from objectives and population distances.
pub fn fitness_values(f: &[f64], pd: &[f64], psi: f64) -> Vec<f64> {
    let norm = |xs: &[f64], higher_better: bool| -> Vec<f64> {
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        xs.iter()
            .map(|&x| {
                if max - min <= 0.0 {
                    0.5
                } else if higher_better {
                    (x - min) / (max - min)
                } else {
                    (max - x) / (max - min)
                }
            })
            .collect()
    };
    let q = norm(f, false);
    let d = norm(pd, true);
    q.iter().zip(&d).map(|(a, b)| psi * a + (1.0 - psi) * b).collect()
}

fn check_fleet(inst: &Instance) -> Result<()> {
    if inst.n_customers() < inst.fleet_size() {
        return Err(Error::TooFewCustomers {
            customers: inst.n_customers(),
            vehicles: inst.fleet_size(),
        });
    }
    Ok(())
}

fn random_open<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Vec<usize> {
    let mut open: Vec<usize> = rand::seq::index::sample(rng, inst.n_depots(), inst.max_open_depots()).into_vec();
    open.sort_unstable();
    open
}

fn assemble(inst: &Instance, open: &[usize], routes: Vec<(usize, Vec<usize>)>) -> Solution {
    let mut flags = vec![false; inst.n_depots()];
    for &d in open {
        flags[d] = true;
    }
    Solution::from_parts(inst, flags, routes)
}

/// Greedy construction: random open depots; route seeds are the globally
/// shortest (open depot, unserved customer) links; routes then grow in
/// round-robin by appending the customer nearest to their last node.
/// Capacity is ignored.
pub fn greedy_construct<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Solution> {
    check_fleet(inst)?;
    let open = random_open(inst, rng);
    let mut served = vec![false; inst.n_vertices()];
    let mut links: Vec<(f64, usize, usize)> = open
        .iter()
        .flat_map(|&d| inst.customer_vertices().map(move |c| (d, c)))
        .map(|(d, c)| (inst.dist(d, c), d, c))
        .collect();
    links.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    let mut routes: Vec<(usize, Vec<usize>)> = Vec::with_capacity(inst.fleet_size());
    for (_, d, c) in links {
        if routes.len() == inst.fleet_size() {
            break;
        }
        if !served[c] {
            served[c] = true;
            routes.push((d, vec![c]));
        }
    }
    let mut left = inst.n_customers() - routes.len();
    let mut k = 0;
    while left > 0 {
        let last = *routes[k].1.last().expect("seeded");
        let next = inst
            .customer_vertices()
            .filter(|&c| !served[c])
            .min_by(|&a, &b| inst.dist(last, a).total_cmp(&inst.dist(last, b)).then(a.cmp(&b)))
            .expect("customers left");
        served[next] = true;
        routes[k].1.push(next);
        left -= 1;
        k = (k + 1) % routes.len();
    }
    Ok(assemble(inst, &open, routes))
}

/// Random construction: random open depots, random seeds on random open
/// depots, remaining customers dealt round-robin in random order.
pub fn random_construct<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Solution> {
    check_fleet(inst)?;
    let open = random_open(inst, rng);
    let mut cs: Vec<usize> = inst.customer_vertices().collect();
    cs.shuffle(rng);
    let nv = inst.fleet_size();
    let mut routes: Vec<(usize, Vec<usize>)> = cs[..nv]
        .iter()
        .map(|&c| (*open.choose(rng).expect("open depot"), vec![c]))
        .collect();
    for (k, &c) in cs[nv..].iter().enumerate() {
        routes[k % nv].1.push(c);
    }
    Ok(assemble(inst, &open, routes))
}
