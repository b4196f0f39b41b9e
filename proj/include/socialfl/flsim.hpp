#pragma once

#include <cstdint>
#include <vector>

#include "socialfl/coalition.hpp"
#include "socialfl/common.hpp"

namespace socialfl::flsim {

using graph::AvatarId;

struct ModelVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

struct LocalUpdate {
  AvatarId avatar = 0;
  ModelVector params;
  double contribution = 0.0;  // d_i * q_i
};

enum class DpMode { solo, cluster };

struct DpParams {
  double sigma = 1.0;
  DpMode mode = DpMode::cluster;
};

struct GroundTruth {
  ModelVector w_star;        // the synthetic optimum
  double noise_scale = 2.0;  // error std scale s
};

struct SocialAggregate {
  ModelVector params;
  double contribution = 0.0;           // sum of member contributions
  std::vector<AvatarId> members;       // ascending
};

// Synthetic optimum with coordinates drawn standard normal.
GroundTruth make_ground_truth(std::size_t dim, std::uint64_t seed,
                              double noise_scale = 2.0);

// params = w_star + eps, eps ~ N(0, s^2/(d q) I), stream derived from
// (seed, avatar, round).
LocalUpdate local_update(const coalition::AvatarProfile& profile,
                         const GroundTruth& truth, std::uint64_t round,
                         std::uint64_t seed);

// Non-cooperative baseline: params + N(0, sigma^2 I).  Shares its noise
// stream derivation with pre_aggregate_cluster so a singleton cluster and a
// solo perturbation of the same avatar coincide exactly.
LocalUpdate perturb_solo(const LocalUpdate& update, const DpParams& dp,
                         std::uint64_t seed, std::uint64_t round);

// Contribution-weighted mean of raw member params plus a single Gaussian
// draw N(0, (sigma/|C|)^2 I) on the aggregate.
SocialAggregate pre_aggregate_cluster(const std::vector<LocalUpdate>& updates,
                                      const DpParams& dp, std::uint64_t seed,
                                      std::uint64_t round);

// Contribution-weighted mean of aggregates; contributions and members union.
SocialAggregate edge_aggregate(const std::vector<SocialAggregate>& aggregates);

// Weighted mean over edge results; equals the one-shot weighted mean over
// all clusters (hierarchy-flattening identity).
ModelVector global_aggregate(const std::vector<SocialAggregate>& edge_results);

// 1 / (1 + ||model - w_star||^2 / F).
double empirical_utility(const ModelVector& model, const GroundTruth& truth);

}  // namespace socialfl::flsim
