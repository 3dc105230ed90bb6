//! The seven move operators with granular candidate generation and
//! constant-time delta evaluation under the penalized objective.
//!
//! Every move is described as a rebuild plan: each touched route becomes a
//! short list of pieces (contiguous, possibly reversed, slices of current
//! routes) hung off a depot. Concatenating the pieces' [`SegData`] gives the
//! new latency and load in O(pieces), and applying the plan copies the same
//! pieces, so the delta and the applied result cannot disagree.

use arrayvec::ArrayVec;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::{SegData, Solution};
use crate::IMPROVE_EPS;

/// Neighborhood identifiers `N1..N7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Neighborhood {
    Relocate = 1,
    Swap = 2,
    TwoOpt = 3,
    TwoRelocate = 4,
    NodeArcSwap = 5,
    ArcArcSwap = 6,
    SwapStar = 7,
}

pub const ALL: [Neighborhood; 7] = [
    Neighborhood::Relocate,
    Neighborhood::Swap,
    Neighborhood::TwoOpt,
    Neighborhood::TwoRelocate,
    Neighborhood::NodeArcSwap,
    Neighborhood::ArcArcSwap,
    Neighborhood::SwapStar,
];

impl Neighborhood {
    pub fn from_id(k: usize) -> Result<Self> {
        if (1..=7).contains(&k) {
            Ok(ALL[k - 1])
        } else {
            Err(Error::InvalidNeighborhood(k))
        }
    }

    pub fn id(self) -> usize {
        self as usize
    }

    /// Zero-based bit used in explored-set masks.
    pub fn bit(self) -> u8 {
        1 << (self as usize - 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Neighborhood::Relocate => "relocate",
            Neighborhood::Swap => "swap",
            Neighborhood::TwoOpt => "2-opt",
            Neighborhood::TwoRelocate => "2-relocate",
            Neighborhood::NodeArcSwap => "node-arc-swap",
            Neighborhood::ArcArcSwap => "arc-arc-swap",
            Neighborhood::SwapStar => "swap*",
        }
    }
}

/// Positions `from..=to` of route `route`, traversed backwards if `rev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub route: u32,
    pub from: u32,
    pub to: u32,
    pub rev: bool,
}

pub const MAX_PIECES: usize = 6;

/// New content of one route.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub route: usize,
    pub depot: usize,
    pub pieces: ArrayVec<Piece, MAX_PIECES>,
}

/// A candidate move and its change in the penalized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub kind: Neighborhood,
    pub delta: f64,
    pub plans: ArrayVec<RoutePlan, 2>,
    /// `(closed, opened)`: every route of the first depot moves to the second.
    pub depot_swap: Option<(usize, usize)>,
}

/// State needed to restore a solution after [`apply`].
#[derive(Debug, Clone)]
pub struct Undo {
    routes: Vec<(usize, usize, Vec<usize>)>,
    open: Vec<(usize, bool)>,
}

/// Slice of a route: `len` positions starting at `from`. A zero-length span
/// is an insertion point before position `from`.
#[derive(Debug, Clone, Copy)]
struct Span {
    from: usize,
    len: usize,
}

impl Span {
    fn end(self) -> usize {
        self.from + self.len
    }
}

type Pieces = ArrayVec<Piece, MAX_PIECES>;

fn push(p: &mut Pieces, route: usize, from: usize, end: usize, rev: bool) {
    if end > from {
        p.push(Piece {
            route: route as u32,
            from: from as u32,
            to: (end - 1) as u32,
            rev,
        });
    }
}

/// Precomputed per-call data shared by every candidate.
struct Ctx<'a> {
    sol: &'a Solution,
    inst: &'a Instance,
    beta: f64,
    cost: Vec<f64>,
    by_depot: Vec<Vec<usize>>,
}

impl<'a> Ctx<'a> {
    fn new(sol: &'a Solution, inst: &'a Instance, beta: f64) -> Self {
        let cap = inst.capacity();
        let cost = sol
            .routes()
            .iter()
            .map(|r| r.latency() + beta * (r.load() - cap).max(0.0))
            .collect();
        Ctx {
            sol,
            inst,
            beta,
            cost,
            by_depot: sol.routes_by_depot(inst),
        }
    }

    fn len(&self, r: usize) -> usize {
        self.sol.route(r).len()
    }

    fn plan_cost(&self, depot: usize, pieces: &[Piece]) -> f64 {
        let mut acc = SegData::depot(depot);
        for p in pieces {
            let seg = self
                .sol
                .route(p.route as usize)
                .segment(p.from as usize, p.to as usize, p.rev);
            acc = acc.concat(seg, self.inst);
        }
        acc.latency + self.beta * (acc.load - self.inst.capacity()).max(0.0)
    }

    fn make(&self, kind: Neighborhood, plans: ArrayVec<RoutePlan, 2>) -> Option<Move> {
        let mut delta = 0.0;
        for p in &plans {
            if p.pieces.is_empty() {
                return None;
            }
            delta += self.plan_cost(p.depot, &p.pieces) - self.cost[p.route];
        }
        Some(Move {
            kind,
            delta,
            plans,
            depot_swap: None,
        })
    }

    fn single(&self, kind: Neighborhood, route: usize, pieces: Pieces) -> Option<Move> {
        let mut plans = ArrayVec::new();
        plans.push(RoutePlan {
            route,
            depot: self.sol.route(route).depot(),
            pieces,
        });
        self.make(kind, plans)
    }

    fn pair(&self, kind: Neighborhood, ra: usize, pa: Pieces, rb: usize, pb: Pieces) -> Option<Move> {
        let mut plans = ArrayVec::new();
        plans.push(RoutePlan {
            route: ra,
            depot: self.sol.route(ra).depot(),
            pieces: pa,
        });
        plans.push(RoutePlan {
            route: rb,
            depot: self.sol.route(rb).depot(),
            pieces: pb,
        });
        self.make(kind, plans)
    }

    /// Exchanges span `a` of route `ra` with span `b` of route `rb`; the
    /// content of each lands in the other's slot.
    #[allow(clippy::too_many_arguments)]
    fn exchange(
        &self,
        kind: Neighborhood,
        ra: usize,
        a: Span,
        rev_a: bool,
        rb: usize,
        b: Span,
        rev_b: bool,
    ) -> Option<Move> {
        if a.end() > self.len(ra) || b.end() > self.len(rb) || (a.len == 0 && b.len == 0) {
            return None;
        }
        if ra == rb {
            let n = self.len(ra);
            let (first, second, first_rev, second_rev) = if a.end() <= b.from {
                (a, b, rev_a, rev_b)
            } else if b.end() <= a.from {
                (b, a, rev_b, rev_a)
            } else {
                return None;
            };
            let mut p = Pieces::new();
            push(&mut p, ra, 0, first.from, false);
            push(&mut p, ra, second.from, second.end(), second_rev);
            push(&mut p, ra, first.end(), second.from, false);
            push(&mut p, ra, first.from, first.end(), first_rev);
            push(&mut p, ra, second.end(), n, false);
            return self.single(kind, ra, p);
        }
        let mut pa = Pieces::new();
        push(&mut pa, ra, 0, a.from, false);
        push(&mut pa, rb, b.from, b.end(), rev_b);
        push(&mut pa, ra, a.end(), self.len(ra), false);
        let mut pb = Pieces::new();
        push(&mut pb, rb, 0, b.from, false);
        push(&mut pb, ra, a.from, a.end(), rev_a);
        push(&mut pb, rb, b.end(), self.len(rb), false);
        self.pair(kind, ra, pa, rb, pb)
    }

    fn whole(&self, r: usize) -> Pieces {
        let mut p = Pieces::new();
        push(&mut p, r, 0, self.len(r), false);
        p
    }

    fn reassign(&self, r: usize, depot: usize) -> Option<Move> {
        let mut plans = ArrayVec::new();
        plans.push(RoutePlan {
            route: r,
            depot,
            pieces: self.whole(r),
        });
        self.make(Neighborhood::Swap, plans)
    }

    fn swap_depots(&self, r1: usize, r2: usize) -> Option<Move> {
        let (d1, d2) = (self.sol.route(r1).depot(), self.sol.route(r2).depot());
        if d1 == d2 {
            return None;
        }
        let mut plans = ArrayVec::new();
        plans.push(RoutePlan {
            route: r1,
            depot: d2,
            pieces: self.whole(r1),
        });
        plans.push(RoutePlan {
            route: r2,
            depot: d1,
            pieces: self.whole(r2),
        });
        self.make(Neighborhood::Swap, plans)
    }

    fn replace_depot(&self, closed: usize, opened: usize) -> Option<Move> {
        if !self.sol.is_open(closed) || self.sol.is_open(opened) {
            return None;
        }
        let mut delta = 0.0;
        for &r in &self.by_depot[closed] {
            delta += self.plan_cost(opened, &self.whole(r)) - self.cost[r];
        }
        Some(Move {
            kind: Neighborhood::Swap,
            delta,
            plans: ArrayVec::new(),
            depot_swap: Some((closed, opened)),
        })
    }

    fn reverse(&self, r: usize, from: usize, to: usize) -> Option<Move> {
        if to <= from || to >= self.len(r) {
            return None;
        }
        let mut p = Pieces::new();
        push(&mut p, r, 0, from, false);
        push(&mut p, r, from, to + 1, true);
        push(&mut p, r, to + 1, self.len(r), false);
        self.single(Neighborhood::TwoOpt, r, p)
    }

    fn routes_at(&self, depot: usize) -> &[usize] {
        &self.by_depot[depot]
    }
}

/// Candidate moves of `kind` anchored at customer `u` that create an arc
/// between `u` and `v`. `visit` returns true to stop the scan.
fn candidates(ctx: &Ctx, kind: Neighborhood, u: usize, v: usize, circles: &[Circle], visit: &mut dyn FnMut(Move) -> bool) -> bool {
    let sol = ctx.sol;
    let inst = ctx.inst;
    let (ru, i) = sol.position(u);
    let nu = ctx.len(ru);
    let mut emit = |m: Option<Move>| m.is_some_and(&mut *visit);
    use Neighborhood as N;

    if inst.is_depot(v) {
        let d = v;
        match kind {
            N::Relocate => {
                for &r in ctx.routes_at(d) {
                    if emit(ctx.exchange(kind, ru, Span { from: i, len: 1 }, false, r, Span { from: 0, len: 0 }, false)) {
                        return true;
                    }
                }
            }
            N::Swap => {
                for &r in ctx.routes_at(d) {
                    if emit(ctx.exchange(kind, ru, Span { from: i, len: 1 }, false, r, Span { from: 0, len: 1 }, false)) {
                        return true;
                    }
                }
                if i == 0 && sol.route(ru).depot() != d {
                    if sol.is_open(d) {
                        if emit(ctx.reassign(ru, d)) {
                            return true;
                        }
                        for &r in ctx.routes_at(d) {
                            if emit(ctx.swap_depots(ru, r)) {
                                return true;
                            }
                        }
                    } else if emit(ctx.replace_depot(sol.route(ru).depot(), d)) {
                        return true;
                    }
                }
            }
            N::TwoOpt => {
                if sol.route(ru).depot() == d && emit(ctx.reverse(ru, 0, i)) {
                    return true;
                }
                if i >= 1 {
                    for &r in ctx.routes_at(d) {
                        if r == ru {
                            continue;
                        }
                        // r takes u's tail, u's route takes all of r's customers
                        let mut pu = Pieces::new();
                        push(&mut pu, ru, 0, i, false);
                        push(&mut pu, r, 0, ctx.len(r), false);
                        let mut pr = Pieces::new();
                        push(&mut pr, ru, i, nu, false);
                        if emit(ctx.pair(kind, ru, pu, r, pr)) {
                            return true;
                        }
                    }
                }
            }
            N::TwoRelocate => {
                if i + 1 < nu {
                    for &r in ctx.routes_at(d) {
                        if emit(ctx.exchange(kind, ru, Span { from: i, len: 2 }, false, r, Span { from: 0, len: 0 }, false)) {
                            return true;
                        }
                    }
                }
            }
            N::NodeArcSwap => {
                for &r in ctx.routes_at(d) {
                    if emit(ctx.exchange(kind, ru, Span { from: i, len: 1 }, false, r, Span { from: 0, len: 2 }, false)) {
                        return true;
                    }
                    if i + 1 < nu && emit(ctx.exchange(kind, ru, Span { from: i, len: 2 }, false, r, Span { from: 0, len: 1 }, false)) {
                        return true;
                    }
                }
            }
            N::ArcArcSwap => {
                if i + 1 < nu {
                    for &r in ctx.routes_at(d) {
                        if emit(ctx.exchange(kind, ru, Span { from: i, len: 2 }, false, r, Span { from: 0, len: 2 }, false)) {
                            return true;
                        }
                    }
                }
            }
            N::SwapStar => {}
        }
        return false;
    }

    let (rv, j) = sol.position(v);
    let nv = ctx.len(rv);
    match kind {
        N::Relocate => {
            let a = Span { from: i, len: 1 };
            emit(ctx.exchange(kind, ru, a, false, rv, Span { from: j + 1, len: 0 }, false))
                || emit(ctx.exchange(kind, ru, a, false, rv, Span { from: j, len: 0 }, false))
        }
        N::Swap => {
            let a = Span { from: i, len: 1 };
            (j + 1 < nv && emit(ctx.exchange(kind, ru, a, false, rv, Span { from: j + 1, len: 1 }, false)))
                || (j >= 1 && emit(ctx.exchange(kind, ru, a, false, rv, Span { from: j - 1, len: 1 }, false)))
        }
        N::TwoOpt => {
            if ru == rv {
                let (a, b) = (i.min(j), i.max(j));
                emit(ctx.reverse(ru, a + 1, b)) || (b >= 1 && emit(ctx.reverse(ru, a, b - 1)))
            } else {
                // tail exchange: u → v
                let mut pu = Pieces::new();
                push(&mut pu, ru, 0, i + 1, false);
                push(&mut pu, rv, j, nv, false);
                let mut pv = Pieces::new();
                push(&mut pv, rv, 0, j, false);
                push(&mut pv, ru, i + 1, nu, false);
                if emit(ctx.pair(kind, ru, pu, rv, pv)) {
                    return true;
                }
                // tail exchange: v → u
                let mut pu = Pieces::new();
                push(&mut pu, ru, 0, i, false);
                push(&mut pu, rv, j + 1, nv, false);
                let mut pv = Pieces::new();
                push(&mut pv, rv, 0, j + 1, false);
                push(&mut pv, ru, i, nu, false);
                if emit(ctx.pair(kind, ru, pu, rv, pv)) {
                    return true;
                }
                // head-reversing exchange: u → v, v's head runs backwards
                let mut pu = Pieces::new();
                push(&mut pu, ru, 0, i + 1, false);
                push(&mut pu, rv, 0, j + 1, true);
                let mut pv = Pieces::new();
                push(&mut pv, ru, i + 1, nu, true);
                push(&mut pv, rv, j + 1, nv, false);
                emit(ctx.pair(kind, ru, pu, rv, pv))
            }
        }
        N::TwoRelocate => {
            if i + 1 >= nu {
                return false;
            }
            let a = Span { from: i, len: 2 };
            emit(ctx.exchange(kind, ru, a, false, rv, Span { from: j + 1, len: 0 }, false))
                || emit(ctx.exchange(kind, ru, a, true, rv, Span { from: j, len: 0 }, false))
        }
        N::NodeArcSwap => {
            (j + 2 < nv
                && emit(ctx.exchange(kind, ru, Span { from: i, len: 1 }, false, rv, Span { from: j + 1, len: 2 }, false)))
                || (i + 1 < nu
                    && j + 1 < nv
                    && emit(ctx.exchange(kind, ru, Span { from: i, len: 2 }, false, rv, Span { from: j + 1, len: 1 }, false)))
        }
        N::ArcArcSwap => {
            i + 1 < nu
                && j + 2 < nv
                && emit(ctx.exchange(kind, ru, Span { from: i, len: 2 }, false, rv, Span { from: j + 1, len: 2 }, false))
        }
        N::SwapStar => ru != rv && circles[ru].overlaps(&circles[rv]) && emit(swap_star(ctx, u, v)),
    }
}

/// Best re-insertion of `v` into `u`'s route (without `u`) and of `u` into
/// `v`'s route (without `v`).
fn swap_star(ctx: &Ctx, u: usize, v: usize) -> Option<Move> {
    let (ru, i) = ctx.sol.position(u);
    let (rv, j) = ctx.sol.position(v);
    let (pu, cu) = best_insertion(ctx, ru, i, rv, j)?;
    let (pv, cv) = best_insertion(ctx, rv, j, ru, i)?;
    let delta = cu + cv - ctx.cost[ru] - ctx.cost[rv];
    let mut plans = ArrayVec::new();
    plans.push(RoutePlan {
        route: ru,
        depot: ctx.sol.route(ru).depot(),
        pieces: pu,
    });
    plans.push(RoutePlan {
        route: rv,
        depot: ctx.sol.route(rv).depot(),
        pieces: pv,
    });
    Some(Move {
        kind: Neighborhood::SwapStar,
        delta,
        plans,
        depot_swap: None,
    })
}

/// Removes position `i` from route `r` and inserts position `j` of route
/// `src` at the cheapest place. Returns the pieces and the new route cost.
fn best_insertion(ctx: &Ctx, r: usize, i: usize, src: usize, j: usize) -> Option<(Pieces, f64)> {
    let n = ctx.len(r);
    let mut best: Option<(Pieces, f64)> = None;
    for q in 0..=n {
        if q == i + 1 {
            continue;
        }
        let mut p = Pieces::new();
        if q <= i {
            push(&mut p, r, 0, q, false);
            push(&mut p, src, j, j + 1, false);
            push(&mut p, r, q, i, false);
            push(&mut p, r, i + 1, n, false);
        } else {
            push(&mut p, r, 0, i, false);
            push(&mut p, r, i + 1, q, false);
            push(&mut p, src, j, j + 1, false);
            push(&mut p, r, q, n, false);
        }
        let c = ctx.plan_cost(ctx.sol.route(r).depot(), &p);
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((p, c));
        }
    }
    best
}

/// Bounding circle of a route's customers.
#[derive(Debug, Clone, Copy)]
struct Circle {
    x: f64,
    y: f64,
    r: f64,
}

impl Circle {
    fn of(inst: &Instance, customers: &[usize]) -> Circle {
        let n = customers.len().max(1) as f64;
        let (sx, sy) = customers.iter().fold((0.0, 0.0), |(sx, sy), &c| {
            let (x, y) = inst.coords(c);
            (sx + x, sy + y)
        });
        let (x, y) = (sx / n, sy / n);
        let r = customers
            .iter()
            .map(|&c| {
                let (cx, cy) = inst.coords(c);
                (cx - x).hypot(cy - y)
            })
            .fold(0.0, f64::max);
        Circle { x, y, r }
    }

    fn overlaps(&self, o: &Circle) -> bool {
        (self.x - o.x).hypot(self.y - o.y) <= self.r + o.r + 1e-9
    }
}

fn circles(sol: &Solution, inst: &Instance, kind: Neighborhood) -> Vec<Circle> {
    if kind == Neighborhood::SwapStar {
        sol.routes().iter().map(|r| Circle::of(inst, r.customers())).collect()
    } else {
        Vec::new()
    }
}

/// First improving move of neighborhood `k`, or `None` at a local optimum.
///
/// Anchor customers are scanned in a random order; for each anchor only
/// moves creating an arc to one of its candidate-list vertices are tried.
pub fn explore<R: Rng + ?Sized>(
    sol: &Solution,
    inst: &Instance,
    k: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Option<Move>> {
    let kind = Neighborhood::from_id(k)?;
    let ctx = Ctx::new(sol, inst, beta);
    let circ = circles(sol, inst, kind);
    let mut anchors: Vec<usize> = inst.customer_vertices().collect();
    anchors.shuffle(rng);
    let mut found = None;
    for &u in &anchors {
        for &v in inst.neighbors(u) {
            let stop = candidates(&ctx, kind, u, v, &circ, &mut |m| {
                if m.delta < -IMPROVE_EPS {
                    found = Some(m);
                    true
                } else {
                    false
                }
            });
            if stop {
                return Ok(found);
            }
        }
    }
    Ok(None)
}

/// First inter-route 2-opt* move lowering the penalized objective, scanning
/// every customer pair regardless of candidate lists.
pub fn first_improving_two_opt_star<R: Rng + ?Sized>(
    sol: &Solution,
    inst: &Instance,
    beta: f64,
    rng: &mut R,
) -> Option<Move> {
    let ctx = Ctx::new(sol, inst, beta);
    let mut anchors: Vec<usize> = inst.customer_vertices().collect();
    anchors.shuffle(rng);
    let mut found = None;
    for &u in &anchors {
        let ru = sol.position(u).0;
        for v in inst.customer_vertices() {
            if sol.position(v).0 == ru {
                continue;
            }
            let stop = candidates(&ctx, Neighborhood::TwoOpt, u, v, &[], &mut |m| {
                if m.delta < -IMPROVE_EPS {
                    found = Some(m);
                    true
                } else {
                    false
                }
            });
            if stop {
                return found;
            }
        }
    }
    None
}

/// Every candidate move of neighborhood `k` in deterministic order. With
/// `granular` false, every vertex is treated as a candidate neighbor.
pub fn enumerate_moves(sol: &Solution, inst: &Instance, k: usize, beta: f64, granular: bool) -> Result<Vec<Move>> {
    let kind = Neighborhood::from_id(k)?;
    let ctx = Ctx::new(sol, inst, beta);
    let circ = circles(sol, inst, kind);
    let mut out = Vec::new();
    for u in inst.customer_vertices() {
        let all: Vec<usize>;
        let vs: &[usize] = if granular {
            inst.neighbors(u)
        } else {
            all = (0..inst.n_vertices()).filter(|&v| v != u).collect();
            &all
        };
        for &v in vs {
            candidates(&ctx, kind, u, v, &circ, &mut |m| {
                out.push(m);
                false
            });
        }
    }
    Ok(out)
}

/// Applies a move and returns the data needed to undo it.
pub fn apply(sol: &mut Solution, inst: &Instance, mv: &Move) -> Undo {
    let mut updates = Vec::with_capacity(2);
    let mut old = Vec::with_capacity(2);
    for plan in &mv.plans {
        let mut cs = Vec::new();
        for p in &plan.pieces {
            let src = &sol.route(p.route as usize).customers()[p.from as usize..=p.to as usize];
            if p.rev {
                cs.extend(src.iter().rev());
            } else {
                cs.extend_from_slice(src);
            }
        }
        let r = sol.route(plan.route);
        old.push((plan.route, r.depot(), r.customers().to_vec()));
        updates.push((plan.route, plan.depot, cs));
    }
    let mut open = Vec::new();
    if let Some((closed, opened)) = mv.depot_swap {
        for (k, r) in sol.routes().iter().enumerate() {
            if r.depot() == closed {
                old.push((k, closed, r.customers().to_vec()));
                updates.push((k, opened, r.customers().to_vec()));
            }
        }
        open = vec![(closed, false), (opened, true)];
    }
    sol.replace_routes(inst, updates, &open);
    Undo {
        routes: old,
        open: open.into_iter().map(|(d, f)| (d, !f)).collect(),
    }
}

/// Restores the solution saved by [`apply`].
pub fn undo(sol: &mut Solution, inst: &Instance, u: Undo) {
    sol.replace_routes(inst, u.routes, &u.open);
}
