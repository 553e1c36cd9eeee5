#pragma once

#include <string>
#include <vector>

namespace steer {

struct PlanProvenance {
  std::string source_set_id;
  std::string adapter_kind;
  std::string mapping_summary;

  bool operator==(const PlanProvenance&) const = default;
};

// Vectors added to the residual stream of the target model, one slot per
// target layer. An empty slot means "no injection at this layer"; a plan with
// no slots at all is the unsteered baseline.
struct SteeringPlan {
  std::vector<std::vector<float>> layer_vectors;
  double lambda = 0.0;
  PlanProvenance provenance;

  bool empty() const { return layer_vectors.empty(); }

  bool operator==(const SteeringPlan&) const = default;
};

}  // namespace steer
