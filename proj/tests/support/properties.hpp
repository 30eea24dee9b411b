#pragma once

#include <string>
#include <vector>

namespace pathtemper::testing {

struct PropertyResult {
  std::string name;
  bool pass;
  std::string detail;
};

PropertyResult trapezoid_exact_on_linear_gradients();
PropertyResult link_c1_at_knots();
PropertyResult conditional_invariance_under_pseudo_prior();
PropertyResult gpd_shape_recovery();
PropertyResult bridge_rao_blackwell_equivalence();
PropertyResult gradients_match_finite_differences();

std::vector<PropertyResult> run_property_suite();

}  // namespace pathtemper::testing
