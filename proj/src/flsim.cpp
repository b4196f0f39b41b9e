#include "socialfl/flsim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "socialfl/rng.hpp"

namespace socialfl::flsim {

namespace {

ModelVector weighted_mean(const std::vector<SocialAggregate>& inputs) {
  if (inputs.empty())
    throw InvalidInputError("aggregate: empty input list");
  std::size_t dim = inputs.front().params.dim();
  double total = 0.0;
  for (const auto& in : inputs) {
    if (in.params.dim() != dim)
      throw InvalidInputError("aggregate: model dimension mismatch");
    if (!(in.contribution > 0.0))
      throw InvalidInputError("aggregate: contribution must be > 0");
    total += in.contribution;
  }
  // A lone input passes through unchanged: (c*v)/c may round, and the
  // solo / singleton-cluster equivalence is promised bit for bit.
  if (inputs.size() == 1) return inputs.front().params;
  ModelVector out;
  out.values.assign(dim, 0.0);
  for (const auto& in : inputs)
    for (std::size_t k = 0; k < dim; ++k)
      out.values[k] += in.contribution * in.params.values[k];
  for (auto& v : out.values) v /= total;
  return out;
}

}  // namespace

GroundTruth make_ground_truth(std::size_t dim, std::uint64_t seed,
                              double noise_scale) {
  if (dim < 1) throw InvalidInputError("ground truth: dim must be >= 1");
  auto stream = derive_stream(seed, "flsim.truth");
  GroundTruth truth;
  truth.noise_scale = noise_scale;
  truth.w_star.values.resize(dim);
  for (auto& v : truth.w_star.values) v = stream.gaussian();
  return truth;
}

LocalUpdate local_update(const coalition::AvatarProfile& profile,
                         const GroundTruth& truth, std::uint64_t round,
                         std::uint64_t seed) {
  coalition::validate_profile(profile);
  double contribution = coalition::contribution_of(profile);
  double std_dev = truth.noise_scale / std::sqrt(contribution);
  auto stream = derive_stream(seed, "flsim.local", profile.id, round);
  LocalUpdate update;
  update.avatar = profile.id;
  update.contribution = contribution;
  update.params.values.reserve(truth.w_star.dim());
  for (double w : truth.w_star.values)
    update.params.values.push_back(w + stream.gaussian(0.0, std_dev));
  return update;
}

LocalUpdate perturb_solo(const LocalUpdate& update, const DpParams& dp,
                         std::uint64_t seed, std::uint64_t round) {
  if (dp.mode != DpMode::solo)
    throw InvalidInputError("perturb_solo: dp.mode must be solo");
  auto stream = derive_stream(seed, "flsim.dp", update.avatar, round);
  LocalUpdate out = update;
  for (auto& v : out.params.values) v += stream.gaussian(0.0, dp.sigma);
  return out;
}

SocialAggregate pre_aggregate_cluster(const std::vector<LocalUpdate>& updates,
                                      const DpParams& dp, std::uint64_t seed,
                                      std::uint64_t round) {
  if (updates.empty())
    throw InvalidInputError("pre_aggregate_cluster: empty update list");
  if (dp.mode != DpMode::cluster)
    throw InvalidInputError("pre_aggregate_cluster: dp.mode must be cluster");

  std::set<AvatarId> members;
  std::vector<SocialAggregate> as_aggregates;
  as_aggregates.reserve(updates.size());
  for (const auto& u : updates) {
    if (!members.insert(u.avatar).second)
      throw InvalidInputError("pre_aggregate_cluster: duplicate avatar " +
                              std::to_string(u.avatar));
    as_aggregates.push_back({u.params, u.contribution, {u.avatar}});
  }

  SocialAggregate out;
  out.params = weighted_mean(as_aggregates);
  for (const auto& u : updates) out.contribution += u.contribution;
  out.members.assign(members.begin(), members.end());

  // One draw for the whole cluster, at the per-member noise share.  The
  // stream matches perturb_solo's derivation for the lowest member id, so a
  // singleton cluster reproduces the solo perturbation bit for bit.
  double std_dev = dp.sigma / static_cast<double>(updates.size());
  auto stream = derive_stream(seed, "flsim.dp", out.members.front(), round);
  for (auto& v : out.params.values) v += stream.gaussian(0.0, std_dev);
  return out;
}

SocialAggregate edge_aggregate(
    const std::vector<SocialAggregate>& aggregates) {
  SocialAggregate out;
  out.params = weighted_mean(aggregates);
  std::set<AvatarId> members;
  for (const auto& a : aggregates) {
    out.contribution += a.contribution;
    members.insert(a.members.begin(), a.members.end());
  }
  out.members.assign(members.begin(), members.end());
  return out;
}

ModelVector global_aggregate(
    const std::vector<SocialAggregate>& edge_results) {
  return weighted_mean(edge_results);
}

double empirical_utility(const ModelVector& model, const GroundTruth& truth) {
  if (model.dim() != truth.w_star.dim())
    throw InvalidInputError("empirical_utility: dimension mismatch");
  double sq = 0.0;
  for (std::size_t k = 0; k < model.dim(); ++k) {
    double d = model.values[k] - truth.w_star.values[k];
    sq += d * d;
  }
  return 1.0 / (1.0 + sq / static_cast<double>(model.dim()));
}

}  // namespace socialfl::flsim
