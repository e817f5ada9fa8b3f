#pragma once

// Pseudo-balancing: each positive patch is matched with negatives drawn from
// the same bin of a proxy static feature.

#include "mccl/cube.hpp"

#include <cstdint>
#include <vector>

namespace mccl {

struct BalanceConfig {
  int proxy_feature_index = 0;
  int n_bins = 10;
  int neg_per_pos = 1;
  std::uint64_t seed = 0;

  void validate(int n_stat) const;
};

// Bin of a value already rescaled to [0, 1]; the top edge falls into the last bin.
int assign_bin(double value, int n_bins);

// Mean of the proxy static feature over the patch's cells.
double proxy_value(const Patch& patch, const PatchGeometry& geometry, int feature);

// Record of one positive's draw, kept for auditing the bin rule.
struct NegativeDraw {
  int positive_id = 0;
  int positive_bin = 0;
  int source_bin = 0;
  std::vector<int> negative_ids;
};

struct BalancedSet {
  PatchSet patches;   // positives first (input order), then distinct negatives in draw order
  std::vector<NegativeDraw> draws;
  std::vector<int> bin_of;  // bin of every input patch, parallel to the input order
};

// Negatives are drawn without replacement within one positive's draw. Across
// positives a bin hands out unused negatives first and only recycles once it
// is exhausted. Throws std::invalid_argument when the input has no negatives.
BalancedSet pseudo_balance(const PatchSet& patches, const BalanceConfig& cfg);

}  // namespace mccl
