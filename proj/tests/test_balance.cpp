#include "mccl/balance.hpp"
#include "mccl/errors.hpp"
#include "pools.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>
#include <unordered_map>

using namespace mccl;

namespace {

// Exhaustive check of the bin rule for one balanced set.
bool bin_rule_holds(const PatchSet& input, const BalancedSet& out, int n_bins) {
  std::vector<char> non_empty(n_bins, 0);
  std::unordered_map<int, int> bin_by_id;
  for (std::size_t k = 0; k < input.size(); ++k) {
    bin_by_id[input.patches[k].id] = out.bin_of[k];
    if (input.patches[k].label == 0) non_empty[out.bin_of[k]] = 1;
  }
  for (const auto& d : out.draws) {
    int best = n_bins;
    for (int b = 0; b < n_bins; ++b) {
      if (non_empty[b]) best = std::min(best, std::abs(b - d.positive_bin));
    }
    if (std::abs(d.source_bin - d.positive_bin) != best) return false;
    for (int id : d.negative_ids) {
      if (bin_by_id.at(id) != d.source_bin) return false;
      if (input.at(id).label != 0) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("assign_bin") {
  CHECK(assign_bin(0.0, 10) == 0);
  CHECK(assign_bin(0.05, 10) == 0);
  CHECK(assign_bin(0.1, 10) == 1);
  CHECK(assign_bin(0.95, 10) == 9);
  CHECK(assign_bin(1.0, 10) == 9);
  CHECK(assign_bin(0.5, 1) == 0);
  CHECK(assign_bin(-0.2, 4) == 0);
  CHECK_THROWS(assign_bin(0.5, 0));
}

TEST_CASE("pseudo_balance: hand example with an empty bin") {
  // Proxy range [0, 1], 4 bins. Negatives only in bins 0 and 3.
  PatchSet s = pools::point_set();
  s.patches = {pools::point_patch(0, 0, 0.0f), pools::point_patch(1, 0, 0.1f), pools::point_patch(2, 0, 1.0f),
               pools::point_patch(3, 1, 0.3f), pools::point_patch(4, 1, 0.55f), pools::point_patch(5, 1, 0.9f)};
  s.reindex();
  BalanceConfig cfg;
  cfg.n_bins = 4;
  cfg.seed = 3;
  const BalancedSet b = pseudo_balance(s, cfg);
  CHECK(b.bin_of == std::vector<int>{0, 0, 3, 1, 2, 3});
  REQUIRE(b.draws.size() == 3);
  CHECK(b.draws[0].source_bin == 0);  // bin 1 empty, bin 0 and 2 tie -> lower
  CHECK(b.draws[1].source_bin == 3);  // bin 2 empty, bin 3 at distance 1 (bin 1 empty)
  CHECK(b.draws[2].source_bin == 3);
  CHECK(b.draws[2].negative_ids == std::vector<int>{2});
  CHECK(b.patches.size() == 3 + 2);
  CHECK(b.patches.patches[0].id == 3);
  CHECK(bin_rule_holds(s, b, cfg.n_bins));
}

TEST_CASE("pseudo_balance: bin rule, ratio and determinism on random pools") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const PatchSet pool = pools::random_pool(rng, 20 + static_cast<int>(rng() % 200), 0.1 + 0.3 * (trial % 3));
    if (pool.count_label(0) == 0 || pool.count_label(1) == 0) continue;
    BalanceConfig cfg;
    cfg.n_bins = 1 + static_cast<int>(rng() % 12);
    cfg.neg_per_pos = 1 + static_cast<int>(rng() % 3);
    cfg.seed = rng();
    const BalancedSet b = pseudo_balance(pool, cfg);
    CHECK(bin_rule_holds(pool, b, cfg.n_bins));
    CHECK(b.patches.count_label(1) == pool.count_label(1));
    for (const auto& d : b.draws) {
      CHECK(std::set<int>(d.negative_ids.begin(), d.negative_ids.end()).size() == d.negative_ids.size());
    }

    // Supply suffices when every source bin holds at least k negatives per positive it serves.
    std::map<int, std::size_t> demand, supply;
    for (const auto& d : b.draws) demand[d.source_bin] += cfg.neg_per_pos;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      if (pool.patches[k].label == 0) ++supply[b.bin_of[k]];
    }
    bool suffices = true;
    for (const auto& [bin, need] : demand) suffices = suffices && supply[bin] >= need;
    if (suffices) CHECK(b.patches.count_label(0) == b.patches.count_label(1) * cfg.neg_per_pos);

    const BalancedSet again = pseudo_balance(pool, cfg);
    std::vector<int> ids_a, ids_b;
    for (const auto& p : b.patches.patches) ids_a.push_back(p.id);
    for (const auto& p : again.patches.patches) ids_b.push_back(p.id);
    CHECK(ids_a == ids_b);
  }
}

TEST_CASE("pseudo_balance: config and input errors") {
  PatchSet s = pools::point_set();
  s.patches = {pools::point_patch(0, 1, 0.0f), pools::point_patch(1, 1, 1.0f)};
  s.reindex();
  CHECK_THROWS_AS(pseudo_balance(s, BalanceConfig{}), std::invalid_argument);
  BalanceConfig bad;
  bad.n_bins = 0;
  CHECK_THROWS_AS(pseudo_balance(s, bad), ConfigError);
  bad = BalanceConfig{};
  bad.proxy_feature_index = 1;
  CHECK_THROWS_AS(pseudo_balance(s, bad), ConfigError);
}
