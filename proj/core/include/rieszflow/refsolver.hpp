#pragma once

// Explicit first-order upwind finite-volume solver for
//   d/dt rho = d/dx (rho v_rho),  d/dt eta = d/dx (eta v_eta),
// with spectral velocities. Used as an independent reference for the JKO scheme.

#include <vector>

#include "rieszflow/grid.hpp"
#include "rieszflow/jko.hpp"

namespace rieszflow {

struct VelocityFields {
  std::vector<double> rho;  ///< d/dx (K_s * rho + K_q * eta)
  std::vector<double> eta;  ///< d/dx (K_r * eta + K_q * rho)
};

VelocityFields velocity_fields(const SpeciesPair& pair);

struct FvState {
  SpeciesPair pair;
  double time = 0.0;
  double dt_cfl = 0.0;  ///< largest stable step at this state
};

/// Largest stable dt: the upwind CFL limit h / max_i (u+_{i+1/2} - u-_{i-1/2}) with face
/// velocities u = -(v_i + v_{i+1}) / 2, capped by the explicit-Euler limit 2 / lambda of the
/// nonlocal diffusion, lambda = max(rho) * ((pi/h)^(2-2s) + (pi/h)^(2-2q)) and likewise for eta.
double stable_step(const SpeciesPair& pair);

/// One conservative upwind step with zero-flux walls (periodic faces when the
/// grid is unpadded). Throws CflError when dt exceeds the stable step.
FvState fv_step(const FvState& state, double dt);

struct FvConfig {
  double cfl = 0.4;
};

struct FvRun {
  FvState final_state;
  std::vector<StepDiagnostics> rows;  ///< one per step, step 0 is the initial state
};

/// Steps to time T with dt = cfl * stable_step, shortening the last step to land on T.
FvRun fv_run(const SpeciesPair& initial, double final_time, const FvConfig& cfg = {});

struct CrossValidation {
  double l1_gap = 0.0;  ///< max over species of the L1 distance at T
  double l1_rho = 0.0;
  double l1_eta = 0.0;
};

/// Runs the JKO scheme (with cfg.final_time = T) and the upwind solver to T and
/// compares the final densities. T = 0 returns a zero gap.
CrossValidation cross_validate(const SpeciesPair& initial, double final_time, const SolverConfig& jko_cfg,
                               const FvConfig& fv_cfg = {});

}  // namespace rieszflow
