#ifndef FITWAVE_H
#define FITWAVE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define FW_OK 0

#define FW_INVALID_ARGUMENT 1

#define FW_OUT_OF_RANGE 2

#define FW_NULL_POINTER 3

#define FW_NOT_FOUND 4

#define FW_INTERNAL 5

#define FW_ENGINE_FAITHFUL 0

#define FW_ENGINE_EFFECTIVE 1

// Solved limit curves `q` and `m`.
typedef struct FwCurves FwCurves;

// One simulated replicate.
typedef struct FwTrajectory FwTrajectory;

typedef struct FwScales {
  double a_n;
  double k_n;
  double k_n_minus;
  double k_n_plus;
  uint32_t k_star;
  double t_star;
  double a1;
  double a2;
  double a3;
  double df_width;
  double df_speed;
  double rbw_speed;
  double speed;
} FwScales;

typedef struct FwSnapshot {
  double time;
  double mean;
  double front_lead;
  uint32_t j_min;
  uint32_t j_max;
} FwSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *fw_last_error_message(void);

// Scales and predictions for `(n, mu, s)`; needs `0 < mu < s < 1`.
//
// # Safety
// `out` must be null or point to writable memory for one `FwScales`.
int32_t fw_scales(uint64_t n, double mu, double s, struct FwScales *out);

// Stream seed of replicate `index` under `master`.
uint64_t fw_seed_for_replicate(uint64_t master, uint64_t index);

// Solves the renewal equation with step `h` (1/h must be an integer) up
// to `t_max`.
//
// # Safety
// `out` must be null or point to writable memory for one pointer.
int32_t fw_solve_q(double h, double t_max, struct FwCurves **out);

// `q(t)`, linearly interpolated between grid points.
//
// # Safety
// `curves` must come from `fw_solve_q`; `out` must be writable.
int32_t fw_curves_q_at(const struct FwCurves *curves, double t, double *out);

// `m(t)`, linearly interpolated between grid points.
//
// # Safety
// `curves` must come from `fw_solve_q`; `out` must be writable.
int32_t fw_curves_m_at(const struct FwCurves *curves, double t, double *out);

// Number of grid points, or 0 for a null handle.
//
// # Safety
// `curves` must be null or come from `fw_solve_q`.
uintptr_t fw_curves_len(const struct FwCurves *curves);

// # Safety
// `curves` must be null or come from `fw_solve_q`, and not be used again.
void fw_curves_free(struct FwCurves *curves);

// Simulates one replicate from the all-type-0 population up to `t_end`,
// with `snapshots` evenly spaced snapshots (at least 2) and establishment
// times recorded.
//
// # Safety
// `out` must be null or point to writable memory for one pointer.
int32_t fw_simulate(uint64_t n,
                    double mu,
                    double s,
                    double t_end,
                    uintptr_t snapshots,
                    int32_t engine,
                    uint64_t seed,
                    struct FwTrajectory **out);

// # Safety
// `traj` must be null or come from `fw_simulate`.
uintptr_t fw_trajectory_snapshot_count(const struct FwTrajectory *traj);

// Total number of events, null replacements included.
//
// # Safety
// `traj` must be null or come from `fw_simulate`.
uint64_t fw_trajectory_events(const struct FwTrajectory *traj);

// Summary of snapshot `index`.
//
// # Safety
// `traj` must come from `fw_simulate`; `out` must be writable.
int32_t fw_trajectory_snapshot(const struct FwTrajectory *traj,
                               uintptr_t index,
                               struct FwSnapshot *out);

// Count of type `j` in snapshot `index` (0 outside the occupied band).
//
// # Safety
// `traj` must come from `fw_simulate`; `out` must be writable.
int32_t fw_trajectory_count(const struct FwTrajectory *traj,
                            uintptr_t index,
                            uint32_t j,
                            uint64_t *out);

// Establishment time `tau_j`; `FW_NOT_FOUND` if it was never reached.
//
// # Safety
// `traj` must come from `fw_simulate`; `out` must be writable.
int32_t fw_trajectory_tau(const struct FwTrajectory *traj, uint32_t j, double *out);

// # Safety
// `traj` must be null or come from `fw_simulate`, and not be used again.
void fw_trajectory_free(struct FwTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FITWAVE_H */
