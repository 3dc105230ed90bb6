//! Variable neighborhood descent with a learned neighborhood order and
//! strategic oscillation of the capacity penalty.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::{Oscillation, SearchConfig, VndOrder};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::neighborhoods::{apply, explore, Neighborhood};
use crate::qlearn::{untried, QModel, State, FULL_STATE};
use crate::solution::{PenaltyState, Solution, BETA_MAX};

/// Hard limit on accepted moves per call.
pub const MOVE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SovndStats {
    pub moves: usize,
    pub feasible_accepts: usize,
    pub infeasible_accepts: usize,
    pub beta_adjustments: usize,
    pub explorations: usize,
}

#[derive(Debug, Clone)]
pub struct SovndOutcome {
    /// Best capacity-feasible solution met, if any.
    pub best_feasible: Option<Solution>,
    pub final_current: Solution,
    pub final_beta: f64,
    pub stats: SovndStats,
}

/// Initial penalty weight: objective per unit of demand.
pub fn initial_beta(sol: &Solution, inst: &Instance) -> f64 {
    let total = inst.total_demand();
    if total > 0.0 {
        sol.objective() / total
    } else {
        1.0
    }
}

fn choose<R: Rng + ?Sized>(model: &QModel, order: VndOrder, state: State, rng: &mut R) -> Result<Neighborhood> {
    match order {
        VndOrder::QLearning => model.select_action(state, rng),
        VndOrder::Random => untried(state).choose(rng).copied().ok_or(Error::NoUntriedAction),
        VndOrder::Fixed => untried(state).first().copied().ok_or(Error::NoUntriedAction),
    }
}

/// Improves `s` until a full pass over the seven neighborhoods finds no
/// move that lowers the penalized objective.
///
/// `global_best` is the objective of the best feasible solution of the run,
/// used for the new-best reward bonus.
pub fn rl_sovnd<R: Rng + ?Sized>(
    s: Solution,
    inst: &Instance,
    model: &mut QModel,
    cfg: &SearchConfig,
    global_best: Option<f64>,
    rng: &mut R,
) -> Result<SovndOutcome> {
    s.check_structure(inst)?;
    let beta0 = match cfg.oscillation {
        Oscillation::FeasibleOnly => BETA_MAX,
        _ => initial_beta(&s, inst),
    };
    let mut penalty = PenaltyState::new(beta0, cfg.window);
    let mut stats = SovndStats::default();
    let mut best = s.is_capacity_feasible(inst).then(|| s.clone());
    let mut cur = s;

    loop {
        let mut improved = false;
        let mut state: State = 0;
        while state != FULL_STATE {
            let action = choose(model, cfg.vnd_order, state, rng)?;
            let n_untried = untried(state).len();
            let next_state = state | action.bit();
            stats.explorations += 1;
            let mv = explore(&cur, inst, action.id(), penalty.beta, rng)?;
            if let Some(m) = &mv {
                apply(&mut cur, inst, m);
            }
            if cfg.vnd_order == VndOrder::QLearning {
                let (delta_r, delta_b) = match &mv {
                    Some(m) => {
                        let db = match global_best {
                            Some(gb) if cur.is_capacity_feasible(inst) => gb - cur.objective(),
                            _ => 0.0,
                        };
                        (-m.delta, db)
                    }
                    None => (0.0, 0.0),
                };
                model.update_reward(state, action, delta_r, delta_b, n_untried);
                model.update_q(state, action, next_state);
            }
            if mv.is_none() {
                state = next_state;
                continue;
            }
            stats.moves += 1;
            if stats.moves > MOVE_CAP {
                return Err(Error::MoveCapExceeded(MOVE_CAP));
            }
            let feasible = cur.is_capacity_feasible(inst);
            if feasible {
                stats.feasible_accepts += 1;
                if best.as_ref().is_none_or(|b| cur.objective() < b.objective()) {
                    best = Some(cur.clone());
                }
            } else {
                stats.infeasible_accepts += 1;
            }
            if penalty.record(feasible) {
                match cfg.oscillation {
                    Oscillation::Adaptive => {
                        penalty.adjust(rng)?;
                        stats.beta_adjustments += 1;
                    }
                    Oscillation::FeasibleOnly | Oscillation::FixedBeta => {
                        penalty.feasible_run = 0;
                        penalty.infeasible_run = 0;
                    }
                }
            }
            improved = true;
            break;
        }
        if !improved {
            break;
        }
    }
    Ok(SovndOutcome {
        best_feasible: best,
        final_current: cur,
        final_beta: penalty.beta,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhoods::enumerate_moves;
    use crate::solution::tests::{random_instance, random_solution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(cfg: &SearchConfig) -> QModel {
        QModel::new(cfg.alpha, cfg.gamma, cfg.epsilon)
    }

    #[test]
    fn result_is_local_optimum() {
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 3, 7, 2, 1000.0);
            let s = random_solution(&inst, &mut rng);
            let f0 = s.objective();
            let mut m = model(&cfg);
            let out = rl_sovnd(s, &inst, &mut m, &cfg, None, &mut rng).unwrap();
            let best = out.best_feasible.unwrap();
            assert!(best.objective() <= f0 + 1e-9);
            // capacity is loose so F = f; nothing may improve the final solution
            for k in 1..=7 {
                for mv in enumerate_moves(&out.final_current, &inst, k, out.final_beta, true).unwrap() {
                    assert!(mv.delta >= -1e-9, "operator {k} still improves");
                }
            }
        }
    }

    #[test]
    fn fixed_point_is_returned_unchanged() {
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 3, 7, 2, 1000.0);
        let s = random_solution(&inst, &mut rng);
        let mut m = model(&cfg);
        let first = rl_sovnd(s, &inst, &mut m, &cfg, None, &mut rng).unwrap();
        let again = rl_sovnd(first.final_current.clone(), &inst, &mut m, &cfg, None, &mut rng).unwrap();
        assert_eq!(again.stats.moves, 0);
        assert_eq!(again.best_feasible.unwrap(), first.final_current);
    }

    #[test]
    fn initial_beta_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 2, 5, 1, 1000.0);
        let s = random_solution(&inst, &mut rng);
        let beta = initial_beta(&s, &inst);
        assert!((beta * inst.total_demand() - s.objective()).abs() < 1e-9);
    }

    #[test]
    fn feasible_only_never_accepts_infeasible() {
        let mut cfg = SearchConfig::default();
        cfg.oscillation = Oscillation::FeasibleOnly;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10 {
            let inst = random_instance(&mut rng, 3, 9, 3, 22.0);
            let s = random_solution(&inst, &mut rng);
            if !s.is_capacity_feasible(&inst) {
                continue;
            }
            checked += 1;
            let mut m = model(&cfg);
            let out = rl_sovnd(s, &inst, &mut m, &cfg, None, &mut rng).unwrap();
            assert_eq!(out.stats.infeasible_accepts, 0);
            assert!(out.final_current.is_capacity_feasible(&inst));
        }
    }

    #[test]
    fn infeasible_seed_yields_feasible_best_when_reachable() {
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = random_instance(&mut rng, 3, 9, 3, 30.0);
        for _ in 0..10 {
            let s = random_solution(&inst, &mut rng);
            let mut m = model(&cfg);
            let out = rl_sovnd(s, &inst, &mut m, &cfg, None, &mut rng).unwrap();
            if let Some(b) = &out.best_feasible {
                assert!(b.is_capacity_feasible(&inst));
            }
        }
    }
}
