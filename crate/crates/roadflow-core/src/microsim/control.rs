//! Intersection control: all-way stops with FIFO service and fixed-cycle
//! signals that open one inbound/outbound movement at a time.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use super::SimError;
use crate::graph::NodeId;

use super::net::SimNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Stop,
    Signal,
}

impl ControlKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::Stop => "stop",
            ControlKind::Signal => "signal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stop" => Some(ControlKind::Stop),
            "signal" => Some(ControlKind::Signal),
            _ => None,
        }
    }
}

/// A stop grant: `veh` may cross from `from_edge` onto `to_edge`; the grant
/// is held until the vehicle has fully entered `to_edge` or vanished.
#[derive(Debug, Clone)]
pub(crate) struct Grant {
    pub veh: u32,
    pub from_edge: u32,
    pub to_edge: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StopState {
    pub queue: VecDeque<u32>,
    /// Vehicles currently queued or holding the grant, to stop re-enrollment.
    pub members: BTreeSet<u32>,
    pub grant: Option<Grant>,
}

/// Control state for one simulation. Stop queues are runtime state, so a
/// fresh clone is taken per run.
#[derive(Debug, Clone)]
pub struct Controls {
    /// Per dense node index.
    kind: Vec<Option<ControlKind>>,
    /// Per dense node index: index into `stops`, or u32::MAX.
    stop_of: Vec<u32>,
    pub(crate) stops: Vec<StopState>,
    phase_duration_s: f64,
}

impl Controls {
    pub fn new(
        net: &SimNetwork,
        spec: &[(NodeId, ControlKind)],
        phase_duration_s: f64,
    ) -> Result<Self, SimError> {
        assert!(phase_duration_s > 0.0);
        let n = net.node_count();
        let mut kind = vec![None; n];
        let mut stop_of = vec![u32::MAX; n];
        let mut stops = Vec::new();
        for &(node, k) in spec {
            let idx = net.node_index(node)? as usize;
            kind[idx] = Some(k);
            if k == ControlKind::Stop {
                stop_of[idx] = stops.len() as u32;
                stops.push(StopState::default());
            }
        }
        Ok(Self {
            kind,
            stop_of,
            stops,
            phase_duration_s,
        })
    }

    pub fn none(net: &SimNetwork) -> Self {
        Self::new(net, &[], 10.0).expect("empty control spec")
    }

    pub(crate) fn kind_at(&self, node: u32) -> Option<ControlKind> {
        self.kind[node as usize]
    }

    pub(crate) fn stop_index(&self, node: u32) -> usize {
        let i = self.stop_of[node as usize];
        debug_assert_ne!(i, u32::MAX);
        i as usize
    }

    /// Whether the movement `from_edge -> to_edge` through `node` is open at
    /// time `t` for vehicle `veh`.
    pub(crate) fn gate_open(
        &self,
        net: &SimNetwork,
        t: f64,
        node: u32,
        from_edge: u32,
        to_edge: u32,
        veh: u32,
    ) -> bool {
        match self.kind[node as usize] {
            None => true,
            Some(ControlKind::Signal) => self.signal_open(net, t, node, from_edge, to_edge),
            Some(ControlKind::Stop) => {
                let s = &self.stops[self.stop_index(node)];
                matches!(&s.grant, Some(g) if g.veh == veh && g.from_edge == from_edge)
            }
        }
    }

    /// Fixed-cycle signal: phases enumerate every (inbound, outbound) edge
    /// pair in ascending edge order and each phase opens exactly one pair.
    pub(crate) fn signal_open(
        &self,
        net: &SimNetwork,
        t: f64,
        node: u32,
        from_edge: u32,
        to_edge: u32,
    ) -> bool {
        let ins = &net.node_in[node as usize];
        let outs = &net.node_out[node as usize];
        let cycle = ins.len() * outs.len();
        if cycle == 0 {
            return false;
        }
        let phase = (t / self.phase_duration_s).floor() as u64 % cycle as u64;
        let in_pos = match ins.binary_search(&from_edge) {
            Ok(p) => p,
            Err(_) => return false,
        };
        let out_pos = match outs.binary_search(&to_edge) {
            Ok(p) => p,
            Err(_) => return false,
        };
        (in_pos * outs.len() + out_pos) as u64 == phase
    }

    /// Queues a vehicle at a stop node unless it is already queued or
    /// holding the grant.
    pub(crate) fn enroll(&mut self, node: u32, veh: u32) {
        let i = self.stop_index(node);
        let s = &mut self.stops[i];
        if s.members.insert(veh) {
            s.queue.push_back(veh);
        }
    }

    /// Releases the grant at a stop once `done` says the grantee has fully
    /// entered its target edge (or left the simulation).
    pub(crate) fn release_done(&mut self, stop: usize, done: impl Fn(&Grant) -> bool) {
        let s = &mut self.stops[stop];
        if let Some(g) = &s.grant {
            if done(g) {
                s.members.remove(&g.veh);
                s.grant = None;
            }
        }
    }

    /// Grants the head of the queue if no grant is outstanding. `movement`
    /// reports the (from, to) edges of the vehicle's pending crossing.
    pub(crate) fn grant_next(&mut self, stop: usize, movement: impl Fn(u32) -> (u32, u32)) {
        let s = &mut self.stops[stop];
        if s.grant.is_none() {
            if let Some(veh) = s.queue.pop_front() {
                let (from_edge, to_edge) = movement(veh);
                s.grant = Some(Grant {
                    veh,
                    from_edge,
                    to_edge,
                });
            }
        }
    }

    pub(crate) fn stop_count(&self) -> usize {
        self.stops.len()
    }
}

/// Reads `node_id,control` rows; control is `stop` or `signal`.
pub fn read_controls_csv(path: &Path) -> Result<Vec<(NodeId, ControlKind)>, SimError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let err = |line: u64, reason: String| SimError::MalformedRow {
        path: path.display().to_string(),
        line,
        reason,
    };
    if !rdr.headers()?.iter().eq(["node_id", "control"]) {
        return Err(err(1, "expected header `node_id,control`".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(err(line, format!("expected 2 fields, got {}", rec.len())));
        }
        let node: NodeId = rec[0]
            .trim()
            .parse()
            .map_err(|e| err(line, format!("bad node_id: {e}")))?;
        let kind = ControlKind::parse(rec[1].trim())
            .ok_or_else(|| err(line, format!("unknown control `{}`", &rec[1])))?;
        out.push((node, kind));
    }
    Ok(out)
}
