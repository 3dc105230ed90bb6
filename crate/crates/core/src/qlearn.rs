//! Q-learning controller choosing which neighborhood to explore next.
//!
//! A state is the set of neighborhoods already tried in the current descent
//! pass (a 7-bit mask); an action is an untried neighborhood.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::neighborhoods::{Neighborhood, ALL};

/// Number of neighborhoods.
pub const N_ACTIONS: usize = 7;

/// Number of valid `(state, action)` pairs: Σ_k C(7,k)·(7−k).
pub const TABLE_SIZE: usize = 448;

/// Discount applied to the previous reward on every update.
pub const XI: f64 = 0.95;

const VALUE_LIMIT: f64 = 1e15;

pub type State = u8;

pub const FULL_STATE: State = (1 << N_ACTIONS) - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    q: Vec<f64>,
    r: Vec<f64>,
    index: Vec<u16>,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub xi: f64,
}

fn clamp(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-VALUE_LIMIT, VALUE_LIMIT)
    }
}

impl QModel {
    pub fn new(alpha: f64, gamma: f64, epsilon: f64) -> Self {
        let mut index = vec![u16::MAX; (FULL_STATE as usize + 1) * N_ACTIONS];
        let mut next = 0u16;
        for state in 0..=FULL_STATE {
            for a in ALL {
                if state & a.bit() == 0 {
                    index[state as usize * N_ACTIONS + a.id() - 1] = next;
                    next += 1;
                }
            }
        }
        debug_assert_eq!(next as usize, TABLE_SIZE);
        QModel {
            q: vec![0.0; TABLE_SIZE],
            r: vec![0.0; TABLE_SIZE],
            index,
            alpha,
            gamma,
            epsilon,
            xi: XI,
        }
    }

    /// Number of stored entries (always [`TABLE_SIZE`]).
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn slot(&self, state: State, action: Neighborhood) -> usize {
        let k = self.index[state as usize * N_ACTIONS + action.id() - 1];
        assert!(k != u16::MAX, "action {} already in state {state:#09b}", action.id());
        k as usize
    }

    pub fn q(&self, state: State, action: Neighborhood) -> f64 {
        self.q[self.slot(state, action)]
    }

    pub fn r(&self, state: State, action: Neighborhood) -> f64 {
        self.r[self.slot(state, action)]
    }

    pub fn set_q(&mut self, state: State, action: Neighborhood, v: f64) {
        let k = self.slot(state, action);
        self.q[k] = clamp(v);
    }

    pub fn set_r(&mut self, state: State, action: Neighborhood, v: f64) {
        let k = self.slot(state, action);
        self.r[k] = clamp(v);
    }

    /// ε-greedy choice among untried neighborhoods: argmax Q with probability
    /// ε (uniform tie-break), otherwise uniform.
    pub fn select_action<R: Rng + ?Sized>(&self, state: State, rng: &mut R) -> Result<Neighborhood> {
        let untried = untried(state);
        if untried.is_empty() {
            return Err(Error::NoUntriedAction);
        }
        if untried.len() == 1 {
            return Ok(untried[0]);
        }
        if rng.gen::<f64>() < self.epsilon {
            let best = untried
                .iter()
                .map(|&a| self.q(state, a))
                .fold(f64::NEG_INFINITY, f64::max);
            let ties: Vec<Neighborhood> = untried
                .iter()
                .copied()
                .filter(|&a| self.q(state, a) == best)
                .collect();
            Ok(*ties.choose(rng).expect("non-empty"))
        } else {
            Ok(*untried.choose(rng).expect("non-empty"))
        }
    }

    /// Q(st,a) ← (1−α)Q(st,a) + α[R(st,a) + γ·max_{a′} Q(st′,a′)], the max
    /// term being zero when `next_state` has no untried action.
    pub fn update_q(&mut self, state: State, action: Neighborhood, next_state: State) {
        let future = untried(next_state)
            .iter()
            .map(|&a| self.q(next_state, a))
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .unwrap_or(0.0);
        let k = self.slot(state, action);
        self.q[k] = clamp((1.0 - self.alpha) * self.q[k] + self.alpha * (self.r[k] + self.gamma * future));
    }

    /// Reward update. Improvements earn Δ_r plus a bonus for beating the
    /// global best that grows with the number of neighborhoods already tried.
    pub fn update_reward(&mut self, state: State, action: Neighborhood, delta_r: f64, delta_b: f64, n_untried: usize) {
        let delta_r = clamp(delta_r);
        let delta_b = clamp(delta_b);
        let k = self.slot(state, action);
        let mut v = self.xi * self.r[k] + delta_r;
        if delta_r > 0.0 {
            let exponent = N_ACTIONS as f64 - n_untried as f64;
            v += delta_b.max(0.0) * exponent.exp();
        }
        self.r[k] = clamp(v);
    }

    /// Writes `state,action,q,r` rows for every entry.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "action", "q", "r"])?;
        for state in 0..=FULL_STATE {
            for a in untried(state) {
                w.write_record([
                    state.to_string(),
                    a.id().to_string(),
                    self.q(state, a).to_string(),
                    self.r(state, a).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Neighborhoods not in `state`, in id order.
pub fn untried(state: State) -> Vec<Neighborhood> {
    ALL.iter().copied().filter(|a| state & a.bit() == 0).collect()
}
