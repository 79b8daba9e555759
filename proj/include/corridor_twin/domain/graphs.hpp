#pragma once

#include "corridor_twin/domain/types.hpp"

namespace ctwin::domain {

/// [k x p] with 1 on major-street phase columns of internal intersections.
Tensor arterial_mask(std::size_t k);

/// Node totals from the detector series, masked entries set to the sentinel,
/// and the 19-column static edge schema.
StaticGraphSample build_static_graph(const Scenario& scenario, const Observations& observations);

/// Observations as an inference client sees them: masked phases blanked to the sentinel.
DynamicInputs mask_observations(const StaticGraphSample& sample, const Observations& observations);

/// X_c rows 0-7 spread the imputed totals over intervals by each node's observed
/// profile; rows 8-13 repeat cycle, offset and the four max-green fractions.
DynamicGraphSample build_dynamic_graph(const StaticGraphSample& sample, const Tensor& imputed,
                                       const Scenario& scenario, const DynamicInputs& inputs);

}  // namespace ctwin::domain
