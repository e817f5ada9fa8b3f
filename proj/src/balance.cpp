#include "mccl/balance.hpp"

#include "mccl/errors.hpp"
#include "mccl/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mccl {

void BalanceConfig::validate(int n_stat) const {
  if (n_bins < 1) throw ConfigError("balance.n_bins must be >= 1");
  if (neg_per_pos < 1) throw ConfigError("balance.neg_per_pos must be >= 1");
  if (proxy_feature_index < 0 || proxy_feature_index >= n_stat) {
    throw ConfigError("balance.proxy_feature out of range");
  }
}

int assign_bin(double value, int n_bins) {
  if (!std::isfinite(value)) throw std::invalid_argument("assign_bin: non-finite value");
  if (n_bins < 1) throw std::invalid_argument("assign_bin: n_bins must be >= 1");
  const double scaled = std::floor(value * n_bins);
  if (scaled <= 0.0) return 0;
  return static_cast<int>(std::min<double>(scaled, n_bins - 1));
}

double proxy_value(const Patch& patch, const PatchGeometry& g, int feature) {
  const Eigen::Index cells = static_cast<Eigen::Index>(g.w) * g.h;
  return patch.stat.segment(feature * cells, cells).cast<double>().mean();
}

namespace {

// Negatives of one bin, handed out in a seeded order; recycles after exhaustion.
struct BinSupply {
  std::vector<int> members;  // indices into the input patch vector
  std::vector<int> order;
  std::size_t cursor = 0;
  int round = 0;
};

void refill(BinSupply& bin, std::uint64_t seed, int bin_index) {
  bin.order = bin.members;
  Rng rng = stream_rng(seed, {static_cast<std::uint64_t>(bin_index), static_cast<std::uint64_t>(bin.round)});
  std::shuffle(bin.order.begin(), bin.order.end(), rng);
  bin.cursor = 0;
  ++bin.round;
}

}  // namespace

BalancedSet pseudo_balance(const PatchSet& input, const BalanceConfig& cfg) {
  cfg.validate(input.geometry.n_stat);
  const auto n = input.patches.size();

  std::vector<double> proxy(n);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  bool any_negative = false;
  for (std::size_t k = 0; k < n; ++k) {
    proxy[k] = proxy_value(input.patches[k], input.geometry, cfg.proxy_feature_index);
    lo = std::min(lo, proxy[k]);
    hi = std::max(hi, proxy[k]);
    any_negative = any_negative || input.patches[k].label == 0;
  }
  if (!any_negative) throw std::invalid_argument("pseudo_balance: no negative patches");

  BalancedSet out;
  out.bin_of.resize(n);
  std::vector<BinSupply> bins(cfg.n_bins);
  for (std::size_t k = 0; k < n; ++k) {
    const double scaled = hi > lo ? (proxy[k] - lo) / (hi - lo) : 0.0;
    out.bin_of[k] = assign_bin(scaled, cfg.n_bins);
    if (input.patches[k].label == 0) bins[out.bin_of[k]].members.push_back(static_cast<int>(k));
  }
  for (int b = 0; b < cfg.n_bins; ++b) {
    if (!bins[b].members.empty()) refill(bins[b], cfg.seed, b);
  }

  out.patches.geometry = input.geometry;
  out.patches.split = input.split;
  std::vector<char> taken(n, 0);
  std::vector<int> negative_order;

  for (std::size_t k = 0; k < n; ++k) {
    const Patch& pos = input.patches[k];
    if (pos.label != 1) continue;
    out.patches.patches.push_back(pos);

    // Nearest non-empty bin by index distance; ties go to the lower index.
    const int target = out.bin_of[k];
    int source = -1;
    for (int d = 0; d < cfg.n_bins && source < 0; ++d) {
      if (target - d >= 0 && !bins[target - d].members.empty()) source = target - d;
      else if (target + d < cfg.n_bins && !bins[target + d].members.empty()) source = target + d;
    }

    BinSupply& bin = bins[source];
    NegativeDraw draw{pos.id, target, source, {}};
    const std::size_t want = std::min<std::size_t>(cfg.neg_per_pos, bin.members.size());
    while (draw.negative_ids.size() < want) {
      if (bin.cursor == bin.order.size()) refill(bin, cfg.seed, source);
      const int idx = bin.order[bin.cursor++];
      const int id = input.patches[idx].id;
      if (std::find(draw.negative_ids.begin(), draw.negative_ids.end(), id) != draw.negative_ids.end()) continue;
      draw.negative_ids.push_back(id);
      if (!taken[idx]) {
        taken[idx] = 1;
        negative_order.push_back(idx);
      }
    }
    out.draws.push_back(std::move(draw));
  }

  for (int idx : negative_order) out.patches.patches.push_back(input.patches[idx]);
  out.patches.reindex();
  return out;
}

}  // namespace mccl
