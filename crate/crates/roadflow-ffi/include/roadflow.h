/* C interface to the roadflow network and traffic toolkit. */

#ifndef ROADFLOW_H
#define ROADFLOW_H

/* Generated from the Rust sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code returned by every fallible entry point.
 */
typedef enum RfStatus {
  /**
   * Success.
   */
  RF_OK = 0,
  /**
   * Rejected input: file contents, arguments, or parameters.
   */
  RF_INVALID_INPUT = 1,
  /**
   * Failure while executing or writing results.
   */
  RF_RUNTIME_FAILURE = 2,
  /**
   * A required pointer argument was null.
   */
  RF_NULL_ARGUMENT = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  RF_INVALID_UTF8 = 4,
  /**
   * A panic was caught at the boundary; involved handles are suspect.
   */
  RF_PANIC = 5,
} RfStatus;

/**
 * Equilibrium assignment results over a prepared network.
 */
typedef struct RfAssignment RfAssignment;

/**
 * Prepared road network with speed, capacity, and delay attributes.
 */
typedef struct RfNetwork RfNetwork;

/**
 * Results of a microsimulation run.
 */
typedef struct RfSimReport RfSimReport;

/**
 * Simulation parameters; obtain defaults from [`rf_sim_params_default`]
 * and override fields as needed.
 */
typedef struct RfSimParams {
  /**
   * Integration step in seconds; must divide the 60 s sampling period.
   */
  double dt_s;
  /**
   * Simulated horizon in seconds.
   */
  double horizon_s;
  /**
   * Number of routing iterations.
   */
  uint32_t n_iterations;
  /**
   * Probability that a vehicle is a truck, in [0, 1].
   */
  double truck_share;
  /**
   * Distance scale in metres for forced lane-change urgency.
   */
  double lane_change_scale_m;
  /**
   * Signal phase length in seconds.
   */
  double phase_duration_s;
  /**
   * Seed for fleet synthesis and driver randomness.
   */
  uint64_t seed;
} RfSimParams;

/**
 * One vehicle's results.
 */
typedef struct RfVehicle {
  uint32_t id;
  /**
   * 0 = car, 1 = truck.
   */
  uint32_t vehicle_class;
  double departure_s;
  /**
   * Horizon-truncated for vehicles that never arrived.
   */
  double travel_time_s;
  double distance_m;
  double fuel_ml;
  double co_g;
  /**
   * Edges entered, counting the first.
   */
  uint32_t n_edges;
} RfVehicle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, empty if none yet.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rf_version(void);

/**
 * Builds a routable network from raw node and edge tables: keeps drivable
 * road classes, reduces to the largest strongly connected component,
 * contracts pass-through chains, imputes missing lane counts, and attaches
 * speed, capacity, and delay attributes with coefficients `alpha`/`beta`.
 *
 * # Safety
 * `nodes_path` and `edges_path` must be NUL-terminated strings and `out`
 * must point to writable storage for one pointer.
 */
enum RfStatus rf_network_prepare(const char *nodes_path,
                                 const char *edges_path,
                                 double alpha,
                                 double beta,
                                 struct RfNetwork **out);

/**
 * Loads a network previously written by [`rf_network_write`] (or the CLI).
 * `alpha`/`beta` must match the coefficients the file was built with.
 *
 * # Safety
 * See [`rf_network_prepare`].
 */
enum RfStatus rf_network_load(const char *nodes_path,
                              const char *edges_path,
                              double alpha,
                              double beta,
                              struct RfNetwork **out);

/**
 * Number of nodes, or 0 when `net` is null.
 *
 * # Safety
 * `net` must be null or a live network handle.
 */
uint64_t rf_network_node_count(const struct RfNetwork *net);

/**
 * Number of directed edges, or 0 when `net` is null.
 *
 * # Safety
 * `net` must be null or a live network handle.
 */
uint64_t rf_network_edge_count(const struct RfNetwork *net);

/**
 * Writes the prepared network as node and edge tables readable by
 * [`rf_network_load`].
 *
 * # Safety
 * `net` must be a live network handle; paths as in [`rf_network_prepare`].
 */
enum RfStatus rf_network_write(const struct RfNetwork *net,
                               const char *nodes_path,
                               const char *edges_path);

/**
 * Releases a network handle; null is ignored.
 *
 * # Safety
 * `net` must be null or an unreleased handle from this library.
 */
void rf_network_free(struct RfNetwork *net);

/**
 * Solves static user equilibrium for demand given as a node-to-node table
 * (`origin_node,dest_node,trips[,departure_bucket]`). Each `trips` value is
 * multiplied by `demand_scale` to obtain vehicles per second. Pass 0 for
 * `max_iterations` or a non-positive `gap_tolerance` to use the defaults.
 *
 * # Safety
 * `net` must be a live network handle; strings and `out` as in
 * [`rf_network_prepare`].
 */
enum RfStatus rf_assign_run(const struct RfNetwork *net,
                            const char *node_demand_path,
                            double demand_scale,
                            uint32_t max_iterations,
                            double gap_tolerance,
                            struct RfAssignment **out);

/**
 * Shortest-path loadings performed after the initial one; 0 when `a` is
 * null.
 *
 * # Safety
 * `a` must be null or a live assignment handle.
 */
uint32_t rf_assignment_iterations(const struct RfAssignment *a);

/**
 * Relative equilibrium gap reached; NaN when `a` is null.
 *
 * # Safety
 * `a` must be null or a live assignment handle.
 */
double rf_assignment_relative_gap(const struct RfAssignment *a);

/**
 * Objective value at the final volumes; NaN when `a` is null.
 *
 * # Safety
 * `a` must be null or a live assignment handle.
 */
double rf_assignment_objective(const struct RfAssignment *a);

/**
 * Writes per-edge volumes and congested times as
 * `from,to,key,volume_vps,congested_time_s`.
 *
 * # Safety
 * `a` must be a live assignment handle; `path` as in
 * [`rf_network_prepare`].
 */
enum RfStatus rf_assignment_write_flows(const struct RfAssignment *a, const char *path);

/**
 * Releases an assignment handle; null is ignored.
 *
 * # Safety
 * `a` must be null or an unreleased handle from this library.
 */
void rf_assignment_free(struct RfAssignment *a);

/**
 * Default simulation parameters.
 */
struct RfSimParams rf_sim_params_default(void);

/**
 * Runs the per-vehicle simulation with iterated rerouting. Demand rows are
 * integral trip counts; departures are drawn from the histogram at
 * `departures_path`. `controls_path` may be null for an uncontrolled
 * network, and `params` may be null for defaults. Reported results come
 * from the final routing iteration.
 *
 * # Safety
 * `net` must be a live network handle; non-null strings, `params`, and
 * `out` must point to valid storage.
 */
enum RfStatus rf_microsim_run(const struct RfNetwork *net,
                              const char *node_demand_path,
                              const char *departures_path,
                              const char *controls_path,
                              const struct RfSimParams *params,
                              struct RfSimReport **out);

/**
 * Vehicles that entered the network; 0 when `r` is null.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
uint64_t rf_report_departed(const struct RfSimReport *r);

/**
 * Vehicles that reached their destination; 0 when `r` is null.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
uint64_t rf_report_arrived(const struct RfSimReport *r);

/**
 * Vehicles still on the network when the horizon ended; 0 when `r` is
 * null.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
uint64_t rf_report_active_at_end(const struct RfSimReport *r);

/**
 * Number of vehicle result rows; 0 when `r` is null.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
uint64_t rf_report_vehicle_count(const struct RfSimReport *r);

/**
 * Copies one vehicle's results into `out`.
 *
 * # Safety
 * `r` must be a live report handle and `out` must point to writable
 * storage for one [`RfVehicle`].
 */
enum RfStatus rf_report_vehicle(const struct RfSimReport *r, uint64_t index, struct RfVehicle *out);

/**
 * Writes per-vehicle results as
 * `id,class,departure_s,travel_time_s,distance_m,fuel_mL,co_g,n_edges`.
 *
 * # Safety
 * `r` must be a live report handle; `path` as in [`rf_network_prepare`].
 */
enum RfStatus rf_report_write_vehicles(const struct RfSimReport *r, const char *path);

/**
 * Writes the per-edge interval series as
 * `edge,interval_start_s,utilization,mean_speed_mps`.
 *
 * # Safety
 * `r` must be a live report handle; `path` as in [`rf_network_prepare`].
 */
enum RfStatus rf_report_write_series(const struct RfSimReport *r, const char *path);

/**
 * Releases a report handle; null is ignored.
 *
 * # Safety
 * `r` must be null or an unreleased handle from this library.
 */
void rf_report_free(struct RfSimReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADFLOW_H */
