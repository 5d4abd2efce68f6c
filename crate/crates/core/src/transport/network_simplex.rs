//! Primal network simplex for the uncapacitated bipartite transportation
//! problem.
//!
//! The spanning tree is stored with parent / thread / successor-count
//! arrays (the layout popularised by LEMON), rooted at an artificial node
//! joined to every supply and demand node by a big-M arc. Every arc is
//! uncapacitated, so a non-tree arc always carries zero flow and flows are
//! kept per node: `flow[u]` is the flow on the tree arc joining `u` to its
//! parent. Entering arcs are chosen by block search; after a run of
//! degenerate pivots the entering rule falls back to Bland's
//! lowest-index rule until a pivot makes progress again.

use crate::geodesy::CostMatrix;

/// Supplies or demands at or below this value are treated as zero.
pub const MASS_EPSILON: f64 = 1e-15;

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;

pub(crate) struct Solution {
    /// `(source, target, flow)` on real arcs with positive flow.
    pub arcs: Vec<(usize, usize, f64)>,
    /// Supply that could only be routed through the artificial root.
    pub stranded: f64,
    /// Pivot counts, read by the tests.
    #[allow(dead_code)]
    pub pivots: usize,
    #[allow(dead_code)]
    pub bland_pivots: usize,
}

pub(crate) struct NetworkSimplex<'a> {
    cost: &'a CostMatrix,
    m: usize,
    n_real: usize,
    root: usize,
    scale: f64,
    eps: f64,
    block_size: usize,
    next_arc: usize,
    stall_limit: usize,

    active: Vec<bool>,
    in_tree: Vec<bool>,
    /// Scaled costs as `f32`, `+inf` on tree arcs.
    approx: Vec<f32>,
    exact_phase: bool,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    flow: Vec<f64>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
}

/// Largest rounding error of a scaled cost stored as `f32`, with headroom.
const APPROX_MARGIN: f64 = 1e-7;

const LANES: usize = 8;

/// Block length for pricing, as a multiple of the square root of the arc count.
const BLOCK_FACTOR: f64 = 3.0;

/// Cyclic block search over the rows of a cost matrix. `segment` receives
/// an arc range within one active row, the matching target potentials and
/// a threshold on `cost - pi_t`, and returns the best arc below it.
struct BlockWalk<'c> {
    cost: &'c CostMatrix,
    active: &'c [bool],
    pi_s: &'c [f64],
    pi_t: &'c [f64],
    block: usize,
    gather: Vec<f64>,
}

impl BlockWalk<'_> {
    fn search(
        &mut self,
        next_arc: &mut usize,
        threshold: f64,
        mut segment: impl FnMut(usize, usize, &[f64], f64) -> Option<(f64, usize)>,
    ) -> Option<(usize, usize)> {
        let row_start = self.cost.row_start();
        let cols = self.cost.cols();
        let n = self.cost.n_target();
        let n_real = self.cost.n_arcs();
        let mut best = None;
        let mut min = threshold;
        let mut cnt = self.block;
        let mut e = *next_arc;
        let mut row = row_start.partition_point(|&s| s <= e) - 1;
        let mut remaining = n_real;
        while remaining > 0 {
            let end = row_start[row + 1].min(e + remaining).min(e + cnt);
            if self.active[row] {
                let shift = self.pi_s[row];
                let lo = row_start[row];
                let pi = if row_start[row + 1] - lo == n {
                    &self.pi_t[e - lo..end - lo]
                } else {
                    self.gather.clear();
                    self.gather.extend(cols[e..end].iter().map(|&j| self.pi_t[j as usize]));
                    &self.gather[..]
                };
                if let Some((v, k)) = segment(e, end, pi, min - shift) {
                    min = v + shift;
                    best = Some((e + k, row));
                }
            }
            cnt -= end - e;
            remaining -= end - e;
            e = end;
            if cnt == 0 {
                if best.is_some() {
                    break;
                }
                cnt = self.block;
            }
            if e == n_real {
                e = 0;
                row = 0;
            }
            while row_start[row + 1] <= e {
                row += 1;
            }
        }
        if best.is_some() {
            *next_arc = if e == n_real { 0 } else { e };
        }
        best
    }
}

/// As [`segment_min`] on the `f32` copy, where tree arcs hold `+inf`.
#[inline]
fn approx_segment_min(costs: &[f32], pi: &[f64], threshold: f64) -> Option<(f64, usize)> {
    let reduced = |c: f32, p: f64| f64::from(c) - p;
    let mut lane = [f64::INFINITY; LANES];
    let mut cc = costs.chunks_exact(LANES);
    let mut pc = pi.chunks_exact(LANES);
    for (c, p) in (&mut cc).zip(&mut pc) {
        for l in 0..LANES {
            let v = reduced(c[l], p[l]);
            lane[l] = if v < lane[l] { v } else { lane[l] };
        }
    }
    let mut low = lane.iter().copied().fold(f64::INFINITY, f64::min);
    for (&c, &p) in cc.remainder().iter().zip(pc.remainder()) {
        low = low.min(reduced(c, p));
    }
    if low < threshold {
        costs.iter().zip(pi).position(|(&c, &p)| reduced(c, p) == low).map(|k| (low, k))
    } else {
        None
    }
}

/// Minimum of `costs[k] * scale - pi[k]` over arcs not in the tree, with its
/// first index, if it is below `threshold`. Inactive targets carry an
/// infinite negative potential and never qualify.
#[inline]
fn segment_min(costs: &[f64], pi: &[f64], in_tree: &[bool], scale: f64, threshold: f64) -> Option<(f64, usize)> {
    let reduced = |c: f64, p: f64, t: bool| if t { f64::INFINITY } else { c * scale - p };
    let mut lane = [f64::INFINITY; LANES];
    let mut cc = costs.chunks_exact(LANES);
    let mut pc = pi.chunks_exact(LANES);
    let mut tc = in_tree.chunks_exact(LANES);
    for ((c, p), t) in (&mut cc).zip(&mut pc).zip(&mut tc) {
        for l in 0..LANES {
            let v = reduced(c[l], p[l], t[l]);
            lane[l] = if v < lane[l] { v } else { lane[l] };
        }
    }
    let mut low = lane.iter().copied().fold(f64::INFINITY, f64::min);
    for ((&c, &p), &t) in cc.remainder().iter().zip(pc.remainder()).zip(tc.remainder()) {
        low = low.min(reduced(c, p, t));
    }
    if low < threshold {
        costs
            .iter()
            .zip(pi)
            .zip(in_tree)
            .position(|((&c, &p), &t)| reduced(c, p, t) == low)
            .map(|k| (low, k))
    } else {
        None
    }
}

#[derive(Clone, Copy)]
struct Entering {
    arc: usize,
    source: usize,
    target: usize,
    cost: f64,
}

impl<'a> NetworkSimplex<'a> {
    pub fn new(cost: &'a CostMatrix, supply: &[f64], demand: &[f64]) -> NetworkSimplex<'a> {
        let m = supply.len();
        let n = demand.len();
        debug_assert_eq!(m, cost.n_source());
        debug_assert_eq!(n, cost.n_target());
        let node_num = m + n;
        let root = node_num;
        let n_real = cost.n_arcs();

        let max_cost = cost.max_cost();
        let scale = if max_cost > 0.0 { 1.0 / max_cost } else { 1.0 };
        let art_cost = 2.0 * (node_num as f64 + 1.0);

        let mut active = Vec::with_capacity(node_num);
        let mut net = Vec::with_capacity(node_num);
        for &s in supply {
            let on = s > MASS_EPSILON;
            active.push(on);
            net.push(if on { s } else { 0.0 });
        }
        for &d in demand {
            let on = d > MASS_EPSILON;
            active.push(on);
            net.push(if on { -d } else { 0.0 });
        }

        let total = node_num + 1;
        let mut parent = vec![NONE; total];
        let mut pred = vec![NONE; total];
        let mut pred_dir = vec![0i8; total];
        let mut thread = vec![0usize; total];
        let mut rev_thread = vec![0usize; total];
        let mut succ_num = vec![1usize; total];
        let mut last_succ = vec![0usize; total];
        let mut flow = vec![0.0; total];
        let mut pi = vec![0.0; total];

        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = total;
        last_succ[root] = root - 1;
        for u in 0..node_num {
            parent[u] = root;
            pred[u] = n_real + u;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            last_succ[u] = u;
            if net[u] >= 0.0 {
                pred_dir[u] = UP;
                flow[u] = net[u];
                // inactive targets are priced out by an infinite potential
                pi[u] = if u >= m && !active[u] { f64::NEG_INFINITY } else { 0.0 };
            } else {
                pred_dir[u] = DOWN;
                flow[u] = -net[u];
                pi[u] = art_cost;
            }
        }

        let block_size = ((BLOCK_FACTOR * (n_real as f64).sqrt()).ceil() as usize).max(10);
        NetworkSimplex {
            cost,
            m,
            n_real,
            root,
            scale,
            eps: 1e-14 * art_cost,
            block_size,
            next_arc: 0,
            stall_limit: 10 * node_num + 100,
            active,
            in_tree: vec![false; n_real],
            approx: cost.costs().iter().map(|&c| (c * scale) as f32).collect(),
            exact_phase: false,
            parent,
            pred,
            pred_dir,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            flow,
            pi,
            dirty_revs: Vec::new(),
        }
    }

    fn row_of(&self, arc: usize) -> usize {
        self.cost.row_start().partition_point(|&s| s <= arc) - 1
    }

    /// Block search over the real arcs, resuming after the last entering
    /// arc. Scaled costs are read from the `f32` copy until it offers no
    /// arc below `-(eps + APPROX_MARGIN)`, then from the exact costs.
    fn find_entering_block(&mut self) -> Option<Entering> {
        if self.n_real == 0 {
            return None;
        }
        let cost: &'a CostMatrix = self.cost;
        let costs = cost.costs();
        let m = self.m;
        let scale = self.scale;
        let mut walk = BlockWalk {
            cost,
            active: &self.active[..m],
            pi_s: &self.pi[..m],
            pi_t: &self.pi[m..],
            block: self.block_size,
            gather: Vec::new(),
        };
        let mut found = None;
        if !self.exact_phase {
            let approx = &self.approx;
            found = walk.search(&mut self.next_arc, -self.eps - APPROX_MARGIN, |e, end, pi, threshold| {
                approx_segment_min(&approx[e..end], pi, threshold)
            });
            self.exact_phase = found.is_none();
        }
        if self.exact_phase {
            let in_tree = &self.in_tree;
            found = walk.search(&mut self.next_arc, -self.eps, |e, end, pi, threshold| {
                segment_min(&costs[e..end], pi, &in_tree[e..end], scale, threshold)
            });
        }
        let (arc, source) = found?;
        Some(Entering {
            arc,
            source,
            target: m + cost.cols()[arc] as usize,
            cost: costs[arc] * scale,
        })
    }

    /// Bland's rule: the eligible arc of lowest index.
    fn find_entering_bland(&self) -> Option<Entering> {
        let costs = self.cost.costs();
        let cols = self.cost.cols();
        for row in 0..self.m {
            if !self.active[row] {
                continue;
            }
            let pi_s = self.pi[row];
            let (lo, hi) = (self.cost.row_start()[row], self.cost.row_start()[row + 1]);
            for k in lo..hi {
                if self.in_tree[k] {
                    continue;
                }
                let t = self.m + cols[k] as usize;
                if !self.active[t] {
                    continue;
                }
                let c = costs[k] * self.scale + pi_s - self.pi[t];
                if c < -self.eps {
                    return Some(Entering {
                        arc: k,
                        source: row,
                        target: t,
                        cost: costs[k] * self.scale,
                    });
                }
            }
        }
        None
    }

    pub fn solve(mut self) -> Solution {
        let mut pivots = 0usize;
        let mut bland_pivots = 0usize;
        let mut stalled = 0usize;
        loop {
            let bland = stalled >= self.stall_limit;
            let entering = if bland {
                self.find_entering_bland()
            } else {
                self.find_entering_block()
            };
            let Some(entering) = entering else { break };
            let delta = self.pivot(entering);
            pivots += 1;
            bland_pivots += usize::from(bland);
            if delta > 0.0 {
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
        self.extract(pivots, bland_pivots)
    }

    fn pivot(&mut self, e: Entering) -> f64 {
        // join node of the cycle
        let (mut u, mut v) = (e.source, e.target);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        let join = u;

        // leaving arc: strongly feasible choice (last blocking arc on the
        // target side, first on the source side)
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut from_source_side = true;
        let mut u = e.source;
        while u != join {
            if self.pred_dir[u] == UP && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
            }
            u = self.parent[u];
        }
        let mut u = e.target;
        while u != join {
            if self.pred_dir[u] == DOWN && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                from_source_side = false;
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != NONE, "transportation cycles are always blocked");

        if delta > 0.0 {
            let mut u = e.source;
            while u != join {
                self.flow[u] -= f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
            let mut u = e.target;
            while u != join {
                self.flow[u] += f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if from_source_side {
            (e.source, e.target)
        } else {
            (e.target, e.source)
        };

        self.in_tree[e.arc] = true;
        self.approx[e.arc] = f32::INFINITY;
        let leaving = self.pred[u_out];
        if leaving < self.n_real {
            self.in_tree[leaving] = false;
            self.approx[leaving] = (self.cost.costs()[leaving] * self.scale) as f32;
        }

        self.update_tree(e, join, u_in, v_in, u_out, delta);
        self.update_potential(e, u_in, v_in);
        delta
    }

    fn update_tree(&mut self, e: Entering, join: usize, u_in: usize, v_in: usize, u_out: usize, delta: f64) {
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == e.source { UP } else { DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = e.arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = delta;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem nodes between u_in and u_out
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // shift pred arcs (and their flows) one step along the stem
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.flow[u] = self.flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = e.arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self, e: Entering, u_in: usize, v_in: usize) {
        let sigma = self.pi[v_in] - self.pi[u_in] - f64::from(self.pred_dir[u_in]) * e.cost;
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn extract(self, pivots: usize, bland_pivots: usize) -> Solution {
        let mut arcs = Vec::new();
        let mut stranded = 0.0;
        for u in 0..self.root {
            let a = self.pred[u];
            if a >= self.n_real {
                if u < self.m && self.pred_dir[u] == UP {
                    stranded += self.flow[u];
                }
                continue;
            }
            // flows at round-off level come from the last bits of the
            // mass balance, not from the data
            let f = self.flow[u];
            if f > MASS_EPSILON {
                let i = self.row_of(a);
                let j = self.cost.cols()[a] as usize;
                arcs.push((i, j, f));
            }
        }
        arcs.sort_by_key(|&(i, j, _)| (i, j));
        Solution {
            arcs,
            stranded,
            pivots,
            bland_pivots,
        }
    }
}
