#pragma once

#include <cstdint>

#include "secpol/relmodel.hpp"

namespace secpol {

/// Sizes for a TPC-H-shaped instance. Value distributions follow dbgen's
/// ranges closely enough for the 22 queries and the bundled policies to select
/// non-trivial subsets.
struct SynthOptions {
  std::uint64_t seed = 1;
  int customers = 30;
  int suppliers = 5;
  int parts = 20;
  int max_orders_per_customer = 5;
  int max_lines_per_order = 7;
};

/// Deterministic for a given seed. Requires the eight TPC-H relations.
DatabaseInstance synth_tpch(const Schema& schema, const SynthOptions& options);

}  // namespace secpol
