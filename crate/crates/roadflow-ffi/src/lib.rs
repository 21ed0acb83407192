//! C interface to the road network toolkit.
//!
//! Constructors hand back opaque handles through out-parameters and return
//! [`RfStatus`]. On failure the out-parameter is left untouched and a
//! human-readable message is retrievable with [`rf_last_error_message`]
//! until the next failing call on the same thread. Every handle must be
//! released with its matching `rf_*_free`; freeing null is a no-op. Handles
//! are not synchronized, so a single handle must not be mutated from two
//! threads at once.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use roadflow_core::assign::{
    frank_wolfe, od_pairs_from_node_demand, write_flows_csv, AssignError, AssignmentNetwork,
    AssignmentState, FwConfig,
};
use roadflow_core::attrs::{
    compute_bpr_coefficients, impute_lanes, read_enriched_csv, write_enriched_csv, EnrichedGraph,
};
use roadflow_core::demand::read_node_demand_csv;
use roadflow_core::graph::{
    filter_by_road_type, largest_scc, load_graph, simplify_topology, write_nodes_csv, RoadType,
};
use roadflow_core::microsim::{
    build_fleet, read_controls_csv, read_departures_csv, run_iterations, write_edge_series_csv,
    write_vehicle_csv, Controls, SimConfig, SimError, SimNetwork, SimulationReport, VehicleClass,
};

/// Result code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum RfStatus {
    /// Success.
    RF_OK = 0,
    /// Rejected input: file contents, arguments, or parameters.
    RF_INVALID_INPUT = 1,
    /// Failure while executing or writing results.
    RF_RUNTIME_FAILURE = 2,
    /// A required pointer argument was null.
    RF_NULL_ARGUMENT = 3,
    /// A string argument was not valid UTF-8.
    RF_INVALID_UTF8 = 4,
    /// A panic was caught at the boundary; involved handles are suspect.
    RF_PANIC = 5,
}

/// Prepared road network with speed, capacity, and delay attributes.
pub struct RfNetwork {
    inner: EnrichedGraph,
}

/// Equilibrium assignment results over a prepared network.
pub struct RfAssignment {
    net: AssignmentNetwork,
    state: AssignmentState,
}

/// Results of a microsimulation run.
pub struct RfSimReport {
    inner: SimulationReport,
}

/// Simulation parameters; obtain defaults from [`rf_sim_params_default`]
/// and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfSimParams {
    /// Integration step in seconds; must divide the 60 s sampling period.
    pub dt_s: f64,
    /// Simulated horizon in seconds.
    pub horizon_s: f64,
    /// Number of routing iterations.
    pub n_iterations: u32,
    /// Probability that a vehicle is a truck, in [0, 1].
    pub truck_share: f64,
    /// Distance scale in metres for forced lane-change urgency.
    pub lane_change_scale_m: f64,
    /// Signal phase length in seconds.
    pub phase_duration_s: f64,
    /// Seed for fleet synthesis and driver randomness.
    pub seed: u64,
}

/// One vehicle's results.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfVehicle {
    pub id: u32,
    /// 0 = car, 1 = truck.
    pub vehicle_class: u32,
    pub departure_s: f64,
    /// Horizon-truncated for vehicles that never arrived.
    pub travel_time_s: f64,
    pub distance_m: f64,
    pub fuel_ml: f64,
    pub co_g: f64,
    /// Edges entered, counting the first.
    pub n_edges: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).expect("interior NULs removed");
    });
}

/// Message for the most recent failure on this thread, empty if none yet.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn guard(f: impl FnOnce() -> Result<(), RfStatus>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::RF_OK,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&'static str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic of unknown type".to_string());
            set_error(&msg);
            RfStatus::RF_PANIC
        }
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, RfStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} must not be null"));
        return Err(RfStatus::RF_NULL_ARGUMENT);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(&format!("{name} is not valid UTF-8"));
            Err(RfStatus::RF_INVALID_UTF8)
        }
    }
}

unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, RfStatus> {
    match unsafe { ptr.as_ref() } {
        Some(r) => Ok(r),
        None => {
            set_error(&format!("{name} must not be null"));
            Err(RfStatus::RF_NULL_ARGUMENT)
        }
    }
}

unsafe fn out_param<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, RfStatus> {
    match unsafe { ptr.as_mut() } {
        Some(r) => Ok(r),
        None => {
            set_error(&format!("{name} must not be null"));
            Err(RfStatus::RF_NULL_ARGUMENT)
        }
    }
}

fn invalid<E: std::fmt::Display>(e: E) -> RfStatus {
    set_error(&e.to_string());
    RfStatus::RF_INVALID_INPUT
}

fn runtime<E: std::fmt::Display>(e: E) -> RfStatus {
    set_error(&e.to_string());
    RfStatus::RF_RUNTIME_FAILURE
}

fn assign_status(e: AssignError) -> RfStatus {
    match e {
        AssignError::Io(_) | AssignError::Csv(_) => runtime(e),
        _ => invalid(e),
    }
}

fn sim_status(e: SimError) -> RfStatus {
    match e {
        SimError::AtlasOverflow(_) | SimError::Io(_) | SimError::Csv(_) => runtime(e),
        _ => invalid(e),
    }
}

/// Builds a routable network from raw node and edge tables: keeps drivable
/// road classes, reduces to the largest strongly connected component,
/// contracts pass-through chains, imputes missing lane counts, and attaches
/// speed, capacity, and delay attributes with coefficients `alpha`/`beta`.
///
/// # Safety
/// `nodes_path` and `edges_path` must be NUL-terminated strings and `out`
/// must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_network_prepare(
    nodes_path: *const c_char,
    edges_path: *const c_char,
    alpha: f64,
    beta: f64,
    out: *mut *mut RfNetwork,
) -> RfStatus {
    guard(|| {
        let nodes = unsafe { path_arg(nodes_path, "nodes_path") }?;
        let edges = unsafe { path_arg(edges_path, "edges_path") }?;
        let out = unsafe { out_param(out, "out") }?;
        let raw = load_graph(nodes, edges).map_err(invalid)?;
        let keep: BTreeSet<RoadType> = RoadType::RETAINED.into_iter().collect();
        let connected = largest_scc(&filter_by_road_type(&raw, &keep)).map_err(invalid)?;
        let imputed = impute_lanes(&simplify_topology(&connected));
        let inner = compute_bpr_coefficients(&imputed, alpha, beta).map_err(invalid)?;
        *out = Box::into_raw(Box::new(RfNetwork { inner }));
        Ok(())
    })
}

/// Loads a network previously written by [`rf_network_write`] (or the CLI).
/// `alpha`/`beta` must match the coefficients the file was built with.
///
/// # Safety
/// See [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_network_load(
    nodes_path: *const c_char,
    edges_path: *const c_char,
    alpha: f64,
    beta: f64,
    out: *mut *mut RfNetwork,
) -> RfStatus {
    guard(|| {
        let nodes = unsafe { path_arg(nodes_path, "nodes_path") }?;
        let edges = unsafe { path_arg(edges_path, "edges_path") }?;
        let out = unsafe { out_param(out, "out") }?;
        let inner = read_enriched_csv(nodes, edges, alpha, beta).map_err(invalid)?;
        *out = Box::into_raw(Box::new(RfNetwork { inner }));
        Ok(())
    })
}

/// Number of nodes, or 0 when `net` is null.
///
/// # Safety
/// `net` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn rf_network_node_count(net: *const RfNetwork) -> u64 {
    unsafe { net.as_ref() }.map_or(0, |n| n.inner.graph().node_count() as u64)
}

/// Number of directed edges, or 0 when `net` is null.
///
/// # Safety
/// `net` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn rf_network_edge_count(net: *const RfNetwork) -> u64 {
    unsafe { net.as_ref() }.map_or(0, |n| n.inner.edge_count() as u64)
}

/// Writes the prepared network as node and edge tables readable by
/// [`rf_network_load`].
///
/// # Safety
/// `net` must be a live network handle; paths as in [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_network_write(
    net: *const RfNetwork,
    nodes_path: *const c_char,
    edges_path: *const c_char,
) -> RfStatus {
    guard(|| {
        let net = unsafe { handle(net, "net") }?;
        let nodes = unsafe { path_arg(nodes_path, "nodes_path") }?;
        let edges = unsafe { path_arg(edges_path, "edges_path") }?;
        write_nodes_csv(nodes, net.inner.graph()).map_err(runtime)?;
        write_enriched_csv(edges, &net.inner).map_err(runtime)?;
        Ok(())
    })
}

/// Releases a network handle; null is ignored.
///
/// # Safety
/// `net` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_network_free(net: *mut RfNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Solves static user equilibrium for demand given as a node-to-node table
/// (`origin_node,dest_node,trips[,departure_bucket]`). Each `trips` value is
/// multiplied by `demand_scale` to obtain vehicles per second. Pass 0 for
/// `max_iterations` or a non-positive `gap_tolerance` to use the defaults.
///
/// # Safety
/// `net` must be a live network handle; strings and `out` as in
/// [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_assign_run(
    net: *const RfNetwork,
    node_demand_path: *const c_char,
    demand_scale: f64,
    max_iterations: u32,
    gap_tolerance: f64,
    out: *mut *mut RfAssignment,
) -> RfStatus {
    guard(|| {
        let net = unsafe { handle(net, "net") }?;
        let demand_path = unsafe { path_arg(node_demand_path, "node_demand_path") }?;
        let out = unsafe { out_param(out, "out") }?;
        let records = read_node_demand_csv(demand_path).map_err(invalid)?;
        let demand = od_pairs_from_node_demand(&records, demand_scale);
        let mut cfg = FwConfig::default();
        if max_iterations > 0 {
            cfg.max_iterations = max_iterations as usize;
        }
        if gap_tolerance > 0.0 {
            cfg.gap_tolerance = gap_tolerance;
        }
        let anet = AssignmentNetwork::new(&net.inner);
        let state = frank_wolfe(&anet, &demand, &cfg).map_err(assign_status)?;
        *out = Box::into_raw(Box::new(RfAssignment { net: anet, state }));
        Ok(())
    })
}

/// Shortest-path loadings performed after the initial one; 0 when `a` is
/// null.
///
/// # Safety
/// `a` must be null or a live assignment handle.
#[no_mangle]
pub unsafe extern "C" fn rf_assignment_iterations(a: *const RfAssignment) -> u32 {
    unsafe { a.as_ref() }.map_or(0, |a| a.state.iteration as u32)
}

/// Relative equilibrium gap reached; NaN when `a` is null.
///
/// # Safety
/// `a` must be null or a live assignment handle.
#[no_mangle]
pub unsafe extern "C" fn rf_assignment_relative_gap(a: *const RfAssignment) -> f64 {
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.state.relative_gap)
}

/// Objective value at the final volumes; NaN when `a` is null.
///
/// # Safety
/// `a` must be null or a live assignment handle.
#[no_mangle]
pub unsafe extern "C" fn rf_assignment_objective(a: *const RfAssignment) -> f64 {
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.state.objective)
}

/// Writes per-edge volumes and congested times as
/// `from,to,key,volume_vps,congested_time_s`.
///
/// # Safety
/// `a` must be a live assignment handle; `path` as in
/// [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_assignment_write_flows(
    a: *const RfAssignment,
    path: *const c_char,
) -> RfStatus {
    guard(|| {
        let a = unsafe { handle(a, "a") }?;
        let path = unsafe { path_arg(path, "path") }?;
        write_flows_csv(path, &a.net, &a.state).map_err(runtime)?;
        Ok(())
    })
}

/// Releases an assignment handle; null is ignored.
///
/// # Safety
/// `a` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_assignment_free(a: *mut RfAssignment) {
    if !a.is_null() {
        drop(unsafe { Box::from_raw(a) });
    }
}

/// Default simulation parameters.
#[no_mangle]
pub extern "C" fn rf_sim_params_default() -> RfSimParams {
    let d = SimConfig::default();
    RfSimParams {
        dt_s: d.dt_s,
        horizon_s: d.horizon_s,
        n_iterations: d.n_iterations as u32,
        truck_share: d.truck_share,
        lane_change_scale_m: d.lane_change_scale_m,
        phase_duration_s: d.phase_duration_s,
        seed: d.seed,
    }
}

/// Runs the per-vehicle simulation with iterated rerouting. Demand rows are
/// integral trip counts; departures are drawn from the histogram at
/// `departures_path`. `controls_path` may be null for an uncontrolled
/// network, and `params` may be null for defaults. Reported results come
/// from the final routing iteration.
///
/// # Safety
/// `net` must be a live network handle; non-null strings, `params`, and
/// `out` must point to valid storage.
#[no_mangle]
pub unsafe extern "C" fn rf_microsim_run(
    net: *const RfNetwork,
    node_demand_path: *const c_char,
    departures_path: *const c_char,
    controls_path: *const c_char,
    params: *const RfSimParams,
    out: *mut *mut RfSimReport,
) -> RfStatus {
    guard(|| {
        let net = unsafe { handle(net, "net") }?;
        let demand_path = unsafe { path_arg(node_demand_path, "node_demand_path") }?;
        let departures_path = unsafe { path_arg(departures_path, "departures_path") }?;
        let out = unsafe { out_param(out, "out") }?;

        let mut cfg = SimConfig::default();
        if let Some(p) = unsafe { params.as_ref() } {
            cfg.dt_s = p.dt_s;
            cfg.horizon_s = p.horizon_s;
            cfg.n_iterations = p.n_iterations as usize;
            cfg.truck_share = p.truck_share;
            cfg.lane_change_scale_m = p.lane_change_scale_m;
            cfg.phase_duration_s = p.phase_duration_s;
            cfg.seed = p.seed;
        }
        cfg.validate().map_err(invalid)?;

        let sim_net = SimNetwork::new(&net.inner);
        let demand = read_node_demand_csv(demand_path).map_err(invalid)?;
        let hist = read_departures_csv(departures_path).map_err(invalid)?;
        let controls = if controls_path.is_null() {
            Controls::none(&sim_net)
        } else {
            let path = unsafe { path_arg(controls_path, "controls_path") }?;
            let spec = read_controls_csv(path).map_err(invalid)?;
            Controls::new(&sim_net, &spec, cfg.phase_duration_s).map_err(invalid)?
        };
        let (mut fleet, _dropped) = build_fleet(&demand, &hist, &cfg, &sim_net).map_err(invalid)?;
        let report = run_iterations(&sim_net, &mut fleet, &controls, &cfg).map_err(sim_status)?;
        *out = Box::into_raw(Box::new(RfSimReport { inner: report }));
        Ok(())
    })
}

/// Vehicles that entered the network; 0 when `r` is null.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rf_report_departed(r: *const RfSimReport) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.inner.departed)
}

/// Vehicles that reached their destination; 0 when `r` is null.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rf_report_arrived(r: *const RfSimReport) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.inner.arrived)
}

/// Vehicles still on the network when the horizon ended; 0 when `r` is
/// null.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rf_report_active_at_end(r: *const RfSimReport) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.inner.active_at_end)
}

/// Number of vehicle result rows; 0 when `r` is null.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rf_report_vehicle_count(r: *const RfSimReport) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.inner.vehicles.len() as u64)
}

/// Copies one vehicle's results into `out`.
///
/// # Safety
/// `r` must be a live report handle and `out` must point to writable
/// storage for one [`RfVehicle`].
#[no_mangle]
pub unsafe extern "C" fn rf_report_vehicle(
    r: *const RfSimReport,
    index: u64,
    out: *mut RfVehicle,
) -> RfStatus {
    guard(|| {
        let r = unsafe { handle(r, "r") }?;
        let out = unsafe { out_param(out, "out") }?;
        let Some(v) = r.inner.vehicles.get(index as usize) else {
            set_error(&format!(
                "vehicle index {index} out of range ({} vehicles)",
                r.inner.vehicles.len()
            ));
            return Err(RfStatus::RF_INVALID_INPUT);
        };
        *out = RfVehicle {
            id: v.id,
            vehicle_class: match v.class {
                VehicleClass::Car => 0,
                VehicleClass::Truck => 1,
            },
            departure_s: v.departure_s,
            travel_time_s: v.travel_time_s,
            distance_m: v.distance_m,
            fuel_ml: v.fuel_ml,
            co_g: v.co_g,
            n_edges: v.n_edges,
        };
        Ok(())
    })
}

/// Writes per-vehicle results as
/// `id,class,departure_s,travel_time_s,distance_m,fuel_mL,co_g,n_edges`.
///
/// # Safety
/// `r` must be a live report handle; `path` as in [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_report_write_vehicles(
    r: *const RfSimReport,
    path: *const c_char,
) -> RfStatus {
    guard(|| {
        let r = unsafe { handle(r, "r") }?;
        let path = unsafe { path_arg(path, "path") }?;
        write_vehicle_csv(path, &r.inner.vehicles).map_err(runtime)?;
        Ok(())
    })
}

/// Writes the per-edge interval series as
/// `edge,interval_start_s,utilization,mean_speed_mps`.
///
/// # Safety
/// `r` must be a live report handle; `path` as in [`rf_network_prepare`].
#[no_mangle]
pub unsafe extern "C" fn rf_report_write_series(
    r: *const RfSimReport,
    path: *const c_char,
) -> RfStatus {
    guard(|| {
        let r = unsafe { handle(r, "r") }?;
        let path = unsafe { path_arg(path, "path") }?;
        write_edge_series_csv(path, &r.inner.edge_series).map_err(runtime)?;
        Ok(())
    })
}

/// Releases a report handle; null is ignored.
///
/// # Safety
/// `r` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_report_free(r: *mut RfSimReport) {
    if !r.is_null() {
        drop(unsafe { Box::from_raw(r) });
    }
}
