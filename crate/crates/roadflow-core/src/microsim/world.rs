//! One simulation run over a fixed fleet: double-buffered cell occupancy,
//! with each step split into serial activation, a serial control and
//! lane-mode pre-pass, embarrassingly parallel motion proposals, an ordered
//! serial commit, and a buffer swap. Every random draw happens in a serial
//! phase, so results never depend on worker count.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::atlas::TrafficAtlas;
use super::control::{ControlKind, Controls};
use super::emissions::{co_emission_rate, fuel_rate};
use super::fleet::{vehicle_rng, Vehicle};
use super::idm::idm_acceleration;
use super::net::SimNetwork;
use super::{SimConfig, SimError, VehicleParams, AVG_VEHICLE_LENGTH_M, SAMPLE_PERIOD_S};
use crate::graph::EdgeId;
use crate::units::mps_to_mph;

/// Floor on a sensed gap before it feeds the car-following model; cell
/// quantization can report a marginally non-positive continuous gap for
/// vehicles in disjoint cells.
const MIN_SENSE_GAP_M: f64 = 0.1;

/// A discretionary lane change needs at least this much extra clear road.
const DISCRETIONARY_GAIN_M: f64 = 10.0;

/// Run proposals in parallel only above this many active vehicles.
const PAR_THRESHOLD: usize = 64;

#[derive(Debug, Clone)]
pub(crate) struct VehState {
    pub active: bool,
    pub arrived: bool,
    pub route_index: u32,
    pub lane: u32,
    /// Front bumper, meters from the start of the current edge.
    pub pos: f64,
    pub v: f64,
    pub edge_entry_s: f64,
    pub mandatory_lc: bool,
    pub entered_edges: u32,
    pub travel_time_s: f64,
    pub distance_m: f64,
    pub fuel_ml: f64,
    pub co_g: f64,
}

impl VehState {
    fn idle() -> Self {
        Self {
            active: false,
            arrived: false,
            route_index: 0,
            lane: 0,
            pos: 0.0,
            v: 0.0,
            edge_entry_s: 0.0,
            mandatory_lc: false,
            entered_edges: 0,
            travel_time_s: 0.0,
            distance_m: 0.0,
            fuel_ml: 0.0,
            co_g: 0.0,
        }
    }
}

/// Vehicle bookkeeping identity at one sampled minute. `departed` counts
/// vehicles placed on the network so far, so departed == arrived + active
/// holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationRow {
    pub t_s: f64,
    pub departed: u64,
    pub arrived: u64,
    pub active: u64,
}

/// Where a vehicle is right now; see [`World::vehicle_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSnapshot {
    pub edge: EdgeId,
    pub lane: u32,
    /// Front-bumper offset from the edge start, m.
    pub position_m: f64,
    pub speed_mps: f64,
}

/// One averaged six-minute interval of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SeriesSample {
    pub edge: u32,
    pub interval_start_s: f64,
    pub utilization: f64,
    pub mean_speed_mps: f64,
}

#[derive(Debug, Clone, Copy)]
struct Proposal {
    id: u32,
    /// Requested target lane; the commit falls back to the same-lane
    /// trajectory when the target cells are taken.
    lc_to: Option<u32>,
    a1: f64,
    v1: f64,
    pos1: f64,
    a2: f64,
    v2: f64,
    pos2: f64,
}

fn front_cell(pos: f64, cells: u32) -> u32 {
    (pos.floor() as i64).clamp(0, cells as i64 - 1) as u32
}

/// Places `id` at the largest feasible front cell walking back from
/// `pos_target` toward its old footprint, which is always free because the
/// vehicle vacates its own reservation first. Returns the committed front
/// position.
fn walk_back_place(
    nxt: &mut TrafficAtlas,
    slot: u32,
    cells: u32,
    need: i64,
    pos_target: f64,
    old_pos: f64,
    id: u32,
) -> f64 {
    let f_target = front_cell(pos_target, cells) as i64;
    let f_old = front_cell(old_pos, cells) as i64;
    let mut f = f_target;
    while f > f_old && !nxt.is_free(slot, f - need + 1, f) {
        f -= 1;
    }
    nxt.occupy(slot, f - need + 1, f, id);
    if f == f_target {
        pos_target.max(old_pos)
    } else {
        (f as f64 + pos_target.fract()).max(old_pos)
    }
}

pub struct World<'a> {
    net: &'a SimNetwork,
    cfg: &'a SimConfig,
    vehicles: &'a [Vehicle],
    pub(crate) st: Vec<VehState>,
    rng: Vec<ChaCha8Rng>,
    cur: TrafficAtlas,
    nxt: TrafficAtlas,
    controls: Controls,
    /// Ids not yet handed to an entry queue, ordered by (departure, id).
    pending: Vec<u32>,
    pending_cursor: usize,
    entry_queue: Vec<VecDeque<u32>>,
    queued_edges: BTreeSet<u32>,
    queued_total: usize,
    step_idx: u64,
    pub(crate) activated: u64,
    pub(crate) arrived: u64,
    pub(crate) edge_time_sum: Vec<f64>,
    pub(crate) edge_time_cnt: Vec<u64>,
    pub(crate) minutes: Vec<ConservationRow>,
    pub(crate) series: Vec<SeriesSample>,
    group_util: Vec<f64>,
    group_speed: Vec<f64>,
    group_count: Vec<u64>,
    samples_in_group: usize,
    group_start_s: f64,
}

impl<'a> World<'a> {
    pub fn new(
        net: &'a SimNetwork,
        vehicles: &'a [Vehicle],
        controls: &Controls,
        cfg: &'a SimConfig,
        iteration: u64,
    ) -> Self {
        let counts = net.lane_cell_counts();
        let mut pending: Vec<u32> = (0..vehicles.len() as u32).collect();
        pending.sort_by(|&a, &b| {
            vehicles[a as usize]
                .departure_s
                .total_cmp(&vehicles[b as usize].departure_s)
                .then(a.cmp(&b))
        });
        let m = net.edge_count();
        Self {
            net,
            cfg,
            vehicles,
            st: vec![VehState::idle(); vehicles.len()],
            rng: vehicles
                .iter()
                .map(|v| vehicle_rng(v.seed, iteration))
                .collect(),
            cur: TrafficAtlas::new(&counts),
            nxt: TrafficAtlas::new(&counts),
            controls: controls.clone(),
            pending,
            pending_cursor: 0,
            entry_queue: vec![VecDeque::new(); m],
            queued_edges: BTreeSet::new(),
            queued_total: 0,
            step_idx: 0,
            activated: 0,
            arrived: 0,
            edge_time_sum: vec![0.0; m],
            edge_time_cnt: vec![0; m],
            minutes: Vec::new(),
            series: Vec::new(),
            group_util: vec![0.0; m],
            group_speed: vec![0.0; m],
            group_count: vec![0; m],
            samples_in_group: 0,
            group_start_s: 0.0,
        }
    }

    fn t(&self) -> f64 {
        self.step_idx as f64 * self.cfg.dt_s
    }

    fn params_of(&self, id: u32) -> VehicleParams {
        *self.cfg.params(self.vehicles[id as usize].class)
    }

    fn edge_of(&self, id: u32) -> u32 {
        let s = &self.st[id as usize];
        self.vehicles[id as usize].route[s.route_index as usize]
    }

    fn cur_footprint(&self, id: u32) -> (u32, i64, i64) {
        let s = &self.st[id as usize];
        let e = self.edge_of(id) as usize;
        let need = self.params_of(id).length_m.ceil() as i64;
        let f = front_cell(s.pos, self.net.cells[e]) as i64;
        (self.net.lane_slot(e as u32, s.lane), f - need + 1, f)
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        let steps_per_sample = (SAMPLE_PERIOD_S / self.cfg.dt_s).round() as u64;
        let n_steps = (self.cfg.horizon_s / self.cfg.dt_s).round() as u64;
        for _ in 0..n_steps {
            self.step()?;
            if self.step_idx % steps_per_sample == 0 {
                self.sample_minute();
            }
            if self.all_done() {
                break;
            }
        }
        self.finish();
        Ok(())
    }

    fn all_done(&self) -> bool {
        self.pending_cursor == self.pending.len()
            && self.queued_total == 0
            && self.arrived == self.activated
    }

    /// Elapsed simulated time.
    pub fn time_s(&self) -> f64 {
        self.t()
    }

    /// Kinematic state of one vehicle, or None while it is off the network
    /// (not yet injected, queued at its origin, or arrived).
    pub fn vehicle_state(&self, id: u32) -> Option<VehicleSnapshot> {
        let s = self.st.get(id as usize)?;
        if !s.active {
            return None;
        }
        let slot = self.edge_of(id);
        Some(VehicleSnapshot {
            edge: self.net.edge_ids[slot as usize],
            lane: s.lane,
            position_m: s.pos,
            speed_mps: s.v,
        })
    }

    /// Advances the world by one step. [`Self::run`] drives this in a loop;
    /// it is public so callers can interleave their own observations.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.activate()?;
        self.pre_pass();
        let ids: Vec<u32> = (0..self.vehicles.len() as u32)
            .filter(|&id| self.st[id as usize].active)
            .collect();
        let props: Vec<Proposal> = {
            let w: &World = &*self;
            if ids.len() >= PAR_THRESHOLD {
                ids.par_iter().map(|&id| w.propose(id)).collect()
            } else {
                ids.iter().map(|&id| w.propose(id)).collect()
            }
        };
        self.commit(&props);
        std::mem::swap(&mut self.cur, &mut self.nxt);
        self.step_idx += 1;
        #[cfg(debug_assertions)]
        self.check_consistency();
        Ok(())
    }

    /// Moves due vehicles into per-edge FIFO entry queues, then injects
    /// queue heads wherever a lane has room at the edge start. Stationary
    /// queue heads block their queue until space opens.
    fn activate(&mut self) -> Result<(), SimError> {
        let t = self.t();
        while self.pending_cursor < self.pending.len() {
            let id = self.pending[self.pending_cursor];
            if self.vehicles[id as usize].departure_s > t {
                break;
            }
            self.pending_cursor += 1;
            debug_assert!(!self.vehicles[id as usize].route.is_empty());
            let e = self.vehicles[id as usize].route[0];
            self.entry_queue[e as usize].push_back(id);
            self.queued_edges.insert(e);
            self.queued_total += 1;
            let cap = self.net.cells[e as usize] as usize * self.net.lanes[e as usize] as usize;
            if self.entry_queue[e as usize].len() > cap {
                return Err(SimError::AtlasOverflow(self.net.edge_ids[e as usize]));
            }
        }
        let edges: Vec<u32> = self.queued_edges.iter().copied().collect();
        for e in edges {
            loop {
                let Some(&id) = self.entry_queue[e as usize].front() else {
                    self.queued_edges.remove(&e);
                    break;
                };
                let need = self.params_of(id).length_m.ceil() as i64;
                let cells = self.net.cells[e as usize];
                let pos = ((need - 1) as f64).min((cells - 1) as f64);
                let f = front_cell(pos, cells) as i64;
                let mut feasible = Vec::new();
                for lane in 0..self.net.lanes[e as usize] {
                    let slot = self.net.lane_slot(e, lane);
                    if self.cur.is_free(slot, f - need + 1, f) {
                        feasible.push(lane);
                    }
                }
                if feasible.is_empty() {
                    break;
                }
                let lane = feasible[self.rng[id as usize].random_range(0..feasible.len())];
                let slot = self.net.lane_slot(e, lane);
                self.cur.occupy(slot, f - need + 1, f, id);
                let s = &mut self.st[id as usize];
                s.active = true;
                s.route_index = 0;
                s.lane = lane;
                s.pos = pos;
                s.v = 0.0;
                s.edge_entry_s = t;
                s.entered_edges = 1;
                s.mandatory_lc = false;
                self.entry_queue[e as usize].pop_front();
                self.queued_total -= 1;
                self.activated += 1;
            }
        }
        Ok(())
    }

    /// Serial control updates and lane-mode draws, in vehicle id order.
    fn pre_pass(&mut self) {
        // Stop grants release once the holder has fully entered its target
        // edge (front at least one body length in) or left the simulation.
        for i in 0..self.controls.stop_count() {
            let st = &self.st;
            let vehicles = self.vehicles;
            let cfg = self.cfg;
            self.controls.release_done(i, |g| {
                let s = &st[g.veh as usize];
                if s.arrived {
                    return true;
                }
                let e = vehicles[g.veh as usize].route[s.route_index as usize];
                if e == g.from_edge {
                    false
                } else if e == g.to_edge {
                    s.pos >= cfg.params(vehicles[g.veh as usize].class).length_m
                } else {
                    true
                }
            });
        }
        // Enroll vehicles stopped at the line of a stop-controlled node.
        for id in 0..self.vehicles.len() as u32 {
            let s = &self.st[id as usize];
            if !s.active {
                continue;
            }
            let veh = &self.vehicles[id as usize];
            if s.route_index as usize == veh.route.len() - 1 {
                continue;
            }
            let e = veh.route[s.route_index as usize];
            let node = self.net.head_node(e);
            if self.controls.kind_at(node) != Some(ControlKind::Stop) {
                continue;
            }
            let p = self.params_of(id);
            let d_end = self.net.length_m[e as usize] - s.pos;
            if d_end <= p.min_gap_m + 0.5 && s.v <= 0.1 {
                self.controls.enroll(node, id);
            }
        }
        for i in 0..self.controls.stop_count() {
            let st = &self.st;
            let vehicles = self.vehicles;
            self.controls.grant_next(i, |veh| {
                let s = &st[veh as usize];
                let r = &vehicles[veh as usize].route;
                (
                    r[s.route_index as usize],
                    r[s.route_index as usize + 1],
                )
            });
        }
        // Lane-change mode: a vehicle in a lane that does not continue onto
        // its next edge escalates to mandatory with probability rising as
        // the boundary approaches.
        for id in 0..self.vehicles.len() as u32 {
            let s = &self.st[id as usize];
            if !s.active {
                continue;
            }
            let veh = &self.vehicles[id as usize];
            let last = s.route_index as usize == veh.route.len() - 1;
            let e = veh.route[s.route_index as usize] as usize;
            let lane_valid = last || {
                let f = veh.route[s.route_index as usize + 1] as usize;
                s.lane < self.net.lanes[f]
            };
            if lane_valid {
                self.st[id as usize].mandatory_lc = false;
                continue;
            }
            if !s.mandatory_lc {
                let x = self.net.length_m[e] - s.pos;
                let lam = self.cfg.lane_change_scale_m;
                let prob = (-(x / lam) * (x / lam)).exp();
                let u: f64 = self.rng[id as usize].random();
                if u < prob {
                    self.st[id as usize].mandatory_lc = true;
                }
            }
        }
    }

    /// Leader on the same edge and lane: (continuous gap, leader speed).
    fn local_lead(&self, e: usize, lane: u32, pos: f64) -> Option<(f64, f64)> {
        let slot = self.net.lane_slot(e as u32, lane);
        let fc = front_cell(pos, self.net.cells[e]);
        let (_, j) = self.cur.next_occupied(slot, fc + 1)?;
        let js = &self.st[j as usize];
        let jl = self.params_of(j).length_m;
        Some(((js.pos - jl) - pos, js.v))
    }

    /// Forward sensing for car-following: the nearest same-lane leader, or
    /// across the edge boundary when none. A closed gate or a lane that does
    /// not continue reads as a standing wall at the edge end. Returns
    /// (gap, closing speed), or None on open road.
    fn sense_forward(&self, id: u32, e: usize, lane: u32, pos: f64, v_self: f64) -> Option<(f64, f64)> {
        if let Some((gap, vl)) = self.local_lead(e, lane, pos) {
            return Some((gap, v_self - vl));
        }
        let veh = &self.vehicles[id as usize];
        let s = &self.st[id as usize];
        if s.route_index as usize == veh.route.len() - 1 {
            return None;
        }
        let f = veh.route[s.route_index as usize + 1] as usize;
        let d_end = self.net.length_m[e] - pos;
        let node = self.net.head_node(e as u32);
        let open = lane < self.net.lanes[f]
            && self
                .controls
                .gate_open(self.net, self.t(), node, e as u32, f as u32, id);
        if !open {
            return Some((d_end, v_self));
        }
        let entry = lane.min(self.net.lanes[f] - 1);
        let slot = self.net.lane_slot(f as u32, entry);
        if let Some((_, j)) = self.cur.next_occupied(slot, 0) {
            let js = &self.st[j as usize];
            let jl = self.params_of(j).length_m;
            Some((d_end + (js.pos - jl), v_self - js.v))
        } else {
            None
        }
    }

    /// Inclusive gap acceptance against the target lane: clear alongside,
    /// enough lead room for self, enough lag room for the follower.
    fn lane_change_ok(&self, id: u32, e: usize, tl: u32, p: &VehicleParams) -> bool {
        let s = &self.st[id as usize];
        let slot = self.net.lane_slot(e as u32, tl);
        let cells = self.net.cells[e];
        let need = p.length_m.ceil() as i64;
        let fc = front_cell(s.pos, cells) as i64;
        let lo = fc - need + 1;
        match self.cur.next_occupied(slot, lo.max(0) as u32) {
            Some((c, _)) if (c as i64) <= fc => return false,
            Some((_, j)) => {
                let js = &self.st[j as usize];
                let jl = self.params_of(j).length_m;
                if (js.pos - jl) - s.pos < p.min_gap_m + p.headway_s * s.v {
                    return false;
                }
            }
            None => {}
        }
        if lo > 0 {
            if let Some((_, k)) = self.cur.prev_occupied(slot, (lo - 1) as u32) {
                let ks = &self.st[k as usize];
                let kp = self.params_of(k);
                if (s.pos - p.length_m) - ks.pos < kp.min_gap_m + kp.headway_s * ks.v {
                    return false;
                }
            }
        }
        true
    }

    /// One semi-implicit Euler step against whatever is sensed ahead on the
    /// given lane: (acceleration, new speed, new front position).
    fn euler(&self, id: u32, e: usize, lane: u32, v0: f64, p: &VehicleParams) -> (f64, f64, f64) {
        let s = &self.st[id as usize];
        let a = match self.sense_forward(id, e, lane, s.pos, s.v) {
            None => idm_acceleration(s.v, v0, f64::INFINITY, 0.0, p),
            Some((gap, dv)) => idm_acceleration(s.v, v0, gap.max(MIN_SENSE_GAP_M), dv, p),
        };
        let vn = (s.v + a * self.cfg.dt_s).max(0.0);
        (a, vn, s.pos + vn * self.cfg.dt_s)
    }

    fn propose(&self, id: u32) -> Proposal {
        let veh = &self.vehicles[id as usize];
        let s = &self.st[id as usize];
        let p = self.params_of(id);
        let e = veh.route[s.route_index as usize] as usize;
        let len_e = self.net.length_m[e];
        let lanes_e = self.net.lanes[e];
        let v0 = self.net.speed_mps[e] * p.speed_factor;
        let last = s.route_index as usize == veh.route.len() - 1;
        let next_lanes = if last {
            u32::MAX
        } else {
            self.net.lanes[veh.route[s.route_index as usize + 1] as usize]
        };

        let mut lc_to = None;
        if s.mandatory_lc && s.lane > 0 {
            let tl = s.lane - 1;
            if self.lane_change_ok(id, e, tl, &p) {
                lc_to = Some(tl);
            }
        } else if !s.mandatory_lc && lanes_e > 1 {
            // Discretionary changes need a finite current gap to improve on.
            if let Some((cg, _)) = self.local_lead(e, s.lane, s.pos) {
                let mut best: Option<(f64, u32)> = None;
                let down = s.lane.checked_sub(1);
                let up = (s.lane + 1 < lanes_e).then_some(s.lane + 1);
                for tl in [down, up].into_iter().flatten() {
                    if tl >= next_lanes {
                        continue;
                    }
                    let tg = self
                        .local_lead(e, tl, s.pos)
                        .map_or(f64::INFINITY, |(g, _)| g);
                    if tg < cg + DISCRETIONARY_GAIN_M || !self.lane_change_ok(id, e, tl, &p) {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bg, bl)) => tg > bg || (tg == bg && tl < bl),
                    };
                    if better {
                        best = Some((tg, tl));
                    }
                }
                lc_to = best.map(|(_, tl)| tl);
            }
        }

        let (a2, v2, pos2) = self.euler(id, e, s.lane, v0, &p);
        let (mut a1, mut v1, mut pos1) = (a2, v2, pos2);
        if let Some(tl) = lc_to {
            let t = self.euler(id, e, tl, v0, &p);
            // A change that would cross the boundary this step is dropped;
            // boundary events always run on the current lane.
            if t.2 >= len_e {
                lc_to = None;
            } else {
                (a1, v1, pos1) = t;
            }
        }
        Proposal {
            id,
            lc_to,
            a1,
            v1,
            pos1,
            a2,
            v2,
            pos2,
        }
    }

    fn commit(&mut self, props: &[Proposal]) {
        // Reserve every mover's current cells so that staying put is always
        // feasible; committers vacate their own reservation first, which
        // makes the walk-back fallback collision-free by construction.
        self.nxt.clear();
        for pr in props {
            let (slot, lo, hi) = self.cur_footprint(pr.id);
            self.nxt.occupy(slot, lo, hi, pr.id);
        }
        let t_next = self.t() + self.cfg.dt_s;
        for pr in props {
            self.apply(pr, t_next);
        }
    }

    fn book(&mut self, id: u32, dist: f64, v: f64, a: f64) {
        let dt = self.cfg.dt_s;
        let s = &mut self.st[id as usize];
        s.distance_m += dist;
        s.fuel_ml += fuel_rate(v, a) * dt;
        s.co_g += co_emission_rate(mps_to_mph(v)) * dt;
    }

    fn apply(&mut self, pr: &Proposal, t_next: f64) {
        let id = pr.id;
        let (slot_old, lo_old, hi_old) = self.cur_footprint(id);
        self.nxt.vacate(slot_old, lo_old, hi_old, id);
        let veh = &self.vehicles[id as usize];
        let p = self.params_of(id);
        let need = p.length_m.ceil() as i64;
        let s = &self.st[id as usize];
        let e = veh.route[s.route_index as usize] as usize;
        let len_e = self.net.length_m[e];
        let cells_e = self.net.cells[e];
        let old_pos = s.pos;
        let ri = s.route_index as usize;
        let lane_cur = s.lane;

        if let Some(tl) = pr.lc_to {
            let slot = self.net.lane_slot(e as u32, tl);
            let f = front_cell(pr.pos1, cells_e) as i64;
            if self.nxt.is_free(slot, f - need + 1, f) {
                self.nxt.occupy(slot, f - need + 1, f, id);
                let s = &mut self.st[id as usize];
                s.lane = tl;
                s.pos = pr.pos1;
                s.v = pr.v1;
                self.book(id, pr.pos1 - old_pos, pr.v1, pr.a1);
                return;
            }
        }

        if pr.pos2 < len_e {
            let placed = walk_back_place(
                &mut self.nxt,
                slot_old,
                cells_e,
                need,
                pr.pos2,
                old_pos,
                id,
            );
            let truncated = placed < pr.pos2;
            let v = if truncated {
                ((placed - old_pos) / self.cfg.dt_s).max(0.0)
            } else {
                pr.v2
            };
            let s = &mut self.st[id as usize];
            s.pos = placed;
            s.v = v;
            self.book(id, placed - old_pos, v, pr.a2);
            return;
        }

        // Boundary event, always on the current lane.
        let last = ri == veh.route.len() - 1;
        if last {
            self.edge_time_sum[e] += t_next - s.edge_entry_s;
            self.edge_time_cnt[e] += 1;
            let s = &mut self.st[id as usize];
            s.arrived = true;
            s.active = false;
            s.travel_time_s = t_next - veh.departure_s;
            self.arrived += 1;
            self.book(id, len_e - old_pos, pr.v2, pr.a2);
            return;
        }
        let f_next = veh.route[ri + 1];
        let node = self.net.head_node(e as u32);
        let open = lane_cur < self.net.lanes[f_next as usize]
            && self
                .controls
                .gate_open(self.net, self.t(), node, e as u32, f_next, id);
        if open {
            let len_f = self.net.length_m[f_next as usize];
            let cells_f = self.net.cells[f_next as usize];
            let ov = (pr.pos2 - len_e).min(len_f);
            let fe = front_cell(ov, cells_f) as i64;
            let mut entry: Vec<u32> = (0..self.net.lanes[f_next as usize]).collect();
            entry.sort_by_key(|&l| (l.abs_diff(lane_cur), l));
            for l in entry {
                let slot = self.net.lane_slot(f_next, l);
                if self.nxt.is_free(slot, fe - need + 1, fe) {
                    self.nxt.occupy(slot, fe - need + 1, fe, id);
                    self.edge_time_sum[e] += t_next - s.edge_entry_s;
                    self.edge_time_cnt[e] += 1;
                    let s = &mut self.st[id as usize];
                    s.route_index += 1;
                    s.lane = l;
                    s.pos = ov;
                    s.v = pr.v2;
                    s.edge_entry_s = t_next;
                    s.entered_edges += 1;
                    self.book(id, (len_e - old_pos) + ov, pr.v2, pr.a2);
                    return;
                }
            }
        }
        // Gate closed, lane invalid, or no room on the next edge: halt at
        // the boundary.
        let placed = walk_back_place(&mut self.nxt, slot_old, cells_e, need, len_e, old_pos, id);
        let s = &mut self.st[id as usize];
        s.pos = placed;
        s.v = 0.0;
        self.book(id, placed - old_pos, 0.0, pr.a2);
    }

    fn sample_minute(&mut self) {
        let m = self.net.edge_count();
        let mut count = vec![0u64; m];
        let mut speed = vec![0.0f64; m];
        for id in 0..self.vehicles.len() as u32 {
            let s = &self.st[id as usize];
            if s.active {
                let e = self.edge_of(id) as usize;
                count[e] += 1;
                speed[e] += s.v;
            }
        }
        let spacing = AVG_VEHICLE_LENGTH_M + self.cfg.car.min_gap_m;
        for e in 0..m {
            let max_veh = self.net.length_m[e] * self.net.lanes[e] as f64 / spacing;
            let util = if max_veh > 0.0 {
                (count[e] as f64 / max_veh).min(1.0)
            } else {
                0.0
            };
            self.group_util[e] += util;
            self.group_speed[e] += speed[e];
            self.group_count[e] += count[e];
        }
        self.samples_in_group += 1;
        self.minutes.push(ConservationRow {
            t_s: self.t(),
            departed: self.activated,
            arrived: self.arrived,
            active: self.activated - self.arrived,
        });
        if self.samples_in_group == super::SAMPLES_PER_GROUP {
            self.flush_group();
        }
    }

    /// Emits one averaged row per edge for the group sampled so far. The
    /// trailing group at the horizon may cover fewer samples and is averaged
    /// over what it has.
    fn flush_group(&mut self) {
        let k = self.samples_in_group;
        if k == 0 {
            return;
        }
        for e in 0..self.net.edge_count() {
            let mean_speed = if self.group_count[e] > 0 {
                self.group_speed[e] / self.group_count[e] as f64
            } else {
                self.net.speed_mps[e]
            };
            self.series.push(SeriesSample {
                edge: e as u32,
                interval_start_s: self.group_start_s,
                utilization: self.group_util[e] / k as f64,
                mean_speed_mps: mean_speed,
            });
        }
        self.group_util.fill(0.0);
        self.group_speed.fill(0.0);
        self.group_count.fill(0);
        self.group_start_s += k as f64 * SAMPLE_PERIOD_S;
        self.samples_in_group = 0;
    }

    fn finish(&mut self) {
        self.flush_group();
        for (i, s) in self.st.iter_mut().enumerate() {
            if !s.arrived {
                s.travel_time_s =
                    (self.cfg.horizon_s - self.vehicles[i].departure_s).max(0.0);
            }
        }
    }

    /// Mean measured traversal time per edge, when any vehicle finished it.
    pub fn measured_edge_means(&self) -> Vec<Option<f64>> {
        (0..self.net.edge_count())
            .map(|e| {
                (self.edge_time_cnt[e] > 0).then(|| self.edge_time_sum[e] / self.edge_time_cnt[e] as f64)
            })
            .collect()
    }

    #[cfg(debug_assertions)]
    fn check_consistency(&self) {
        for id in 0..self.vehicles.len() as u32 {
            let s = &self.st[id as usize];
            if !s.active {
                continue;
            }
            let (slot, lo, hi) = self.cur_footprint(id);
            let n = self.cur.lane_len(slot) as i64;
            for cell in lo.max(0)..=hi.min(n - 1) {
                assert_eq!(
                    self.cur.cell_id(slot, cell as u32),
                    Some(id),
                    "vehicle {id} lost cell {cell}"
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::net::tests::grid_net;
    use crate::microsim::VehicleClass;

    fn veh(id: u32, origin: i64, dest: i64, dep: f64, route: Vec<u32>) -> Vehicle {
        Vehicle {
            id,
            class: VehicleClass::Car,
            origin,
            dest,
            departure_s: dep,
            seed: id as u64 * 7 + 1,
            route,
        }
    }

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn single_vehicle_crosses_a_free_edge() {
        let net = grid_net(&[(1, 2, 0, 200.0, 10.0, 1)]);
        let controls = Controls::none(&net);
        let fleet = vec![veh(0, 1, 2, 0.0, vec![0])];
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        let s = &w.st[0];
        assert!(s.arrived);
        // Starts at the 4 m injection offset, accelerates to 10 m/s.
        assert!(s.travel_time_s > 19.6 && s.travel_time_s < 40.0, "{}", s.travel_time_s);
        assert!((s.distance_m - 196.0).abs() < 1e-9);
        assert_eq!(s.entered_edges, 1);
        assert!(s.fuel_ml > 0.0 && s.co_g > 0.0);
        assert_eq!(w.arrived, 1);
        assert_eq!(w.activated, 1);
    }

    #[test]
    fn follower_trails_leader_without_collision() {
        let net = grid_net(&[(1, 2, 0, 500.0, 15.0, 1)]);
        let controls = Controls::none(&net);
        let fleet = vec![
            veh(0, 1, 2, 0.0, vec![0]),
            veh(1, 1, 2, 2.0, vec![0]),
        ];
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        assert!(w.st[0].arrived && w.st[1].arrived);
        assert!(w.st[0].travel_time_s < w.st[1].travel_time_s + 2.0);
    }

    #[test]
    fn transfer_carries_overshoot_onto_the_next_edge() {
        let net = grid_net(&[(1, 2, 0, 120.0, 10.0, 1), (2, 3, 0, 150.0, 10.0, 1)]);
        let controls = Controls::none(&net);
        let fleet = vec![veh(0, 1, 3, 0.0, vec![0, 1])];
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        let s = &w.st[0];
        assert!(s.arrived);
        assert_eq!(s.entered_edges, 2);
        // Distance: 120 - 4 on the first edge plus all 150 of the second.
        assert!((s.distance_m - 266.0).abs() < 1e-9, "{}", s.distance_m);
        let means = w.measured_edge_means();
        assert!(means[0].unwrap() > 11.0);
        assert!(means[1].unwrap() > 14.0);
    }

    #[test]
    fn conservation_holds_at_every_sampled_minute() {
        let net = grid_net(&[(1, 2, 0, 400.0, 5.0, 2), (2, 3, 0, 400.0, 5.0, 1)]);
        let controls = Controls::none(&net);
        let fleet: Vec<Vehicle> = (0..40)
            .map(|i| veh(i, 1, 3, i as f64 * 7.0, vec![0, 1]))
            .collect();
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        assert!(!w.minutes.is_empty());
        for row in &w.minutes {
            assert_eq!(row.departed, row.arrived + row.active, "t={}", row.t_s);
        }
        assert_eq!(w.arrived, 40);
    }

    #[test]
    fn red_signal_delays_crossing() {
        // Node 2 runs a signal with two outbound edges, so each movement is
        // open one phase in two. The vehicle must wait out red time.
        let net = grid_net(&[
            (1, 2, 0, 150.0, 15.0, 1),
            (2, 3, 0, 150.0, 15.0, 1),
            (2, 4, 0, 150.0, 15.0, 1),
        ]);
        let free = {
            let controls = Controls::none(&net);
            let fleet = vec![veh(0, 1, 3, 0.0, vec![0, 1])];
            let cfg = cfg();
            let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
            w.run().unwrap();
            w.st[0].travel_time_s
        };
        let controls = Controls::new(&net, &[(2, ControlKind::Signal)], 10.0).unwrap();
        let fleet = vec![veh(0, 1, 3, 5.0, vec![0, 1])];
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        assert!(w.st[0].arrived);
        // Departing at 5 s, the vehicle reaches the line around 17 s, inside
        // the red [10, 20) for movement 0; it must sit out several seconds.
        assert!(
            w.st[0].travel_time_s > free + 2.0,
            "free {free}, signalized {}",
            w.st[0].travel_time_s
        );
    }

    #[test]
    fn stop_sign_serializes_conflicting_vehicles() {
        let net = grid_net(&[
            (1, 5, 0, 100.0, 15.0, 1),
            (2, 5, 0, 100.0, 15.0, 1),
            (5, 3, 0, 100.0, 15.0, 1),
        ]);
        let controls = Controls::new(&net, &[(5, ControlKind::Stop)], 10.0).unwrap();
        let fleet = vec![
            veh(0, 1, 3, 0.0, vec![0, 2]),
            veh(1, 2, 3, 0.0, vec![1, 2]),
        ];
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        assert!(w.st[0].arrived && w.st[1].arrived);
        // Both had to stop at the line, so both run well over free flow.
        for s in &w.st {
            assert!(s.travel_time_s > 14.0, "{}", s.travel_time_s);
        }
    }

    #[test]
    fn merges_off_a_dead_end_lane_before_the_boundary() {
        // Two lanes feed into a single-lane edge; vehicles injected into
        // lane 1 must merge down to lane 0 to continue.
        let net = grid_net(&[(1, 2, 0, 300.0, 10.0, 2), (2, 3, 0, 300.0, 10.0, 1)]);
        let controls = Controls::none(&net);
        let fleet: Vec<Vehicle> = (0..12)
            .map(|i| veh(i, 1, 3, i as f64 * 4.0, vec![0, 1]))
            .collect();
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        for s in &w.st {
            assert!(s.arrived, "vehicle stuck at pos {} lane {}", s.pos, s.lane);
        }
    }

    #[test]
    fn entry_queue_overflow_is_reported() {
        // 3 m edge, one lane: three cells of space against five simultaneous
        // departures.
        let net = grid_net(&[(1, 2, 0, 3.0, 10.0, 1), (2, 3, 0, 100.0, 10.0, 1)]);
        let controls = Controls::none(&net);
        let fleet: Vec<Vehicle> = (0..5).map(|i| veh(i, 1, 3, 0.0, vec![0, 1])).collect();
        let cfg = cfg();
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        assert!(matches!(w.run(), Err(SimError::AtlasOverflow(_))));
    }

    #[test]
    fn unfinished_vehicles_record_horizon_truncated_times() {
        let net = grid_net(&[(1, 2, 0, 5000.0, 10.0, 1)]);
        let controls = Controls::none(&net);
        let fleet = vec![veh(0, 1, 2, 100.0, vec![0])];
        let mut cfg = cfg();
        cfg.horizon_s = 240.0;
        let mut w = World::new(&net, &fleet, &controls, &cfg, 1);
        w.run().unwrap();
        let s = &w.st[0];
        assert!(!s.arrived);
        assert!((s.travel_time_s - 140.0).abs() < 1e-9);
    }

    #[test]
    fn same_iteration_reruns_identically() {
        let net = grid_net(&[(1, 2, 0, 400.0, 12.0, 2), (2, 3, 0, 400.0, 12.0, 2)]);
        let controls = Controls::none(&net);
        let fleet: Vec<Vehicle> = (0..30)
            .map(|i| veh(i, 1, 3, (i % 10) as f64 * 3.0, vec![0, 1]))
            .collect();
        let cfg = cfg();
        let run = || {
            let mut w = World::new(&net, &fleet, &controls, &cfg, 2);
            w.run().unwrap();
            w.st
                .iter()
                .map(|s| (s.travel_time_s, s.distance_m, s.fuel_ml))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
