#pragma once

// Heat semigroup on the periodic box and the flow-interchange diagnostics built on it.

#include <span>
#include <vector>

#include "rieszflow/grid.hpp"

namespace rieszflow {

struct HeatState {
  SpeciesPair pair;
  double elapsed = 0.0;
};

/// Both components multiplied by exp(-xi^2 t) on the unpadded periodic grid.
/// Round-off negatives are clipped before renormalization. Throws for t < 0.
HeatState heat_evolve(const SpeciesPair& pair, double t);
HeatState heat_evolve(const HeatState& state, double t);
DensityField heat_evolve(const DensityField& f, double t);

/// h sum f log f with 0 log 0 = 0 (cells below 1e-300 are skipped).
double entropy(const DensityField& f);
double entropy(const SpeciesPair& pair);

struct DissipationCheck {
  double gap = 0.0;                ///< relative mismatch of the two sides
  double finite_difference = 0.0;  ///< (F(S_{2dt}) - F(S_0)) / (2 dt)
  double dissipation = 0.0;        ///< heat_dissipation at S_dt
};

/// Central difference of F along the heat flow against -heat_dissipation at the
/// midpoint; dt <= 0 selects 1e-6 L^2.
DissipationCheck dissipation_identity_check(const SpeciesPair& pair, double dt = 0.0);

struct EviSample {
  double t = 0.0;
  double lhs = 0.0;  ///< 1/2 d+/dt W2^2(S_t pair, reference)
  double rhs = 0.0;  ///< H(reference) - H(S_t pair)
  double slack = 0.0;
};

struct EviReport {
  double worst_slack = 0.0;
  std::vector<EviSample> samples;
};

/// Evolution variational inequality (k = 0) of the entropy's heat flow at the
/// sampled times. The one-sided derivative uses forward differences of widths
/// w, w/2, w/4 with Richardson extrapolation; width <= 0 selects 1e-5 L^2.
EviReport evi_check(const SpeciesPair& pair, const SpeciesPair& reference, std::span<const double> t_samples,
                    double width = 0.0);

}  // namespace rieszflow
