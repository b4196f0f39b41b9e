#include "socialfl/coalition.hpp"

#include <algorithm>
#include <cmath>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"

namespace socialfl::coalition {

void validate_profile(const AvatarProfile& p) {
  if (!(p.data_size > 0.0))
    throw InvalidInputError("profile " + std::to_string(p.id) +
                            ": data_size must be > 0");
  if (!(p.data_quality > 0.0) || p.data_quality > 1.0)
    throw InvalidInputError("profile " + std::to_string(p.id) +
                            ": data_quality must be in (0,1]");
}

const AvatarProfile& profile_of(const ProfileMap& profiles, AvatarId id) {
  auto it = profiles.find(id);
  if (it == profiles.end())
    throw InvalidInputError("no profile for avatar " + std::to_string(id));
  return it->second;
}

double contribution_of(const AvatarProfile& p) {
  return p.data_size * p.data_quality;
}

Partition Partition::singletons(const std::vector<AvatarId>& ids) {
  Partition p;
  for (AvatarId id : ids) {
    if (p.owner_.contains(id))
      throw InvalidInputError("partition: duplicate avatar id " +
                              std::to_string(id));
    p.clusters_[id] = {id};
    p.owner_[id] = id;
  }
  return p;
}

AvatarId Partition::cluster_of(AvatarId avatar) const {
  auto it = owner_.find(avatar);
  if (it == owner_.end())
    throw InvalidInputError("partition: unknown avatar " +
                            std::to_string(avatar));
  return it->second;
}

const std::set<AvatarId>& Partition::members_of(AvatarId cluster_id) const {
  auto it = clusters_.find(cluster_id);
  if (it == clusters_.end())
    throw InvalidInputError("partition: unknown cluster " +
                            std::to_string(cluster_id));
  return it->second;
}

void Partition::move(AvatarId avatar, std::optional<AvatarId> target) {
  AvatarId from = cluster_of(avatar);
  if (target && *target == from)
    throw InvalidInputError("partition: avatar already in target cluster");
  if (target && !clusters_.contains(*target))
    throw InvalidInputError("partition: unknown cluster " +
                            std::to_string(*target));

  // Detach from the current cluster, rekeying it if the key member left.
  auto old_members = clusters_.at(from);
  old_members.erase(avatar);
  clusters_.erase(from);
  if (!old_members.empty()) {
    AvatarId new_key = *old_members.begin();
    for (AvatarId m : old_members) owner_[m] = new_key;
    clusters_[new_key] = std::move(old_members);
  }

  if (!target) {
    clusters_[avatar] = {avatar};
    owner_[avatar] = avatar;
    return;
  }
  auto joined = clusters_.at(*target);
  joined.insert(avatar);
  clusters_.erase(*target);
  AvatarId new_key = *joined.begin();
  for (AvatarId m : joined) owner_[m] = new_key;
  clusters_[new_key] = std::move(joined);
}

bool Partition::is_valid(const std::set<AvatarId>& universe) const {
  std::set<AvatarId> seen;
  for (const auto& [key, members] : clusters_) {
    if (members.empty()) return false;
    if (key != *members.begin()) return false;
    for (AvatarId m : members) {
      if (!seen.insert(m).second) return false;      // overlap
      if (!universe.contains(m)) return false;       // stray avatar
      auto it = owner_.find(m);
      if (it == owner_.end() || it->second != key) return false;
    }
  }
  return seen == universe;
}

Digest composition_hash(const std::set<AvatarId>& members) {
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(members.size()));
  for (AvatarId m : members) w.put_u32(m);
  return sha256(w.bytes());
}

void RejectionRecord::add(AvatarId avatar, const Digest& composition) {
  entries_.insert({avatar, composition});
}

bool RejectionRecord::contains(AvatarId avatar,
                               const Digest& composition) const {
  return entries_.contains({avatar, composition});
}

double cluster_utility(const std::set<AvatarId>& cluster,
                       const ProfileMap& profiles,
                       const QualityParams& params) {
  if (cluster.empty())
    throw InvalidInputError("cluster_utility: empty cluster");
  double data = 0.0;
  for (AvatarId id : cluster) data += contribution_of(profile_of(profiles, id));
  double saturation = params.u_max * data / (data + params.kappa);
  double noise_penalty = params.beta * params.sigma_dp * params.sigma_dp /
                         static_cast<double>(cluster.size());
  return saturation - noise_penalty;
}

double federated_payoff(const std::set<AvatarId>& cluster,
                        const ProfileMap& profiles,
                        const QualityParams& params) {
  return cluster_utility(cluster, profiles, params) -
         params.cost_per_member * static_cast<double>(cluster.size());
}

double noncoop_payoff(AvatarId avatar, const ProfileMap& profiles,
                      const QualityParams& params) {
  return federated_payoff({avatar}, profiles, params);
}

double individual_payoff(AvatarId avatar, const std::set<AvatarId>& cluster,
                         const ProfileMap& profiles,
                         const QualityParams& params) {
  if (!cluster.contains(avatar))
    throw InvalidInputError("individual_payoff: avatar " +
                            std::to_string(avatar) + " not in cluster");
  double total = federated_payoff(cluster, profiles, params);
  double data = 0.0;
  double solo_sum = 0.0;
  for (AvatarId id : cluster) {
    data += contribution_of(profile_of(profiles, id));
    solo_sum += noncoop_payoff(id, profiles, params);
  }
  double extra = total - solo_sum;
  double weight = contribution_of(profile_of(profiles, avatar)) / data;
  return noncoop_payoff(avatar, profiles, params) + weight * extra;
}

TrustCache::TrustCache(const graph::SocialGraph& g,
                       const graph::TrustParams& params)
    : theta_(params.theta_trust) {
  auto ids = g.avatar_ids();
  std::size_t n = ids.size();
  for (std::size_t k = 0; k < n; ++k) index_[ids[k]] = k;
  values_.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double t = graph::combined_trust(g, ids[a], ids[b], params);
      values_[a * n + b] = t;
      values_[b * n + a] = t;
    }
  }
}

double TrustCache::combined(AvatarId i, AvatarId j) const {
  auto a = index_.find(i);
  auto b = index_.find(j);
  if (a == index_.end() || b == index_.end())
    throw InvalidInputError("trust cache: unknown avatar id");
  return values_[a->second * index_.size() + b->second];
}

bool TrustCache::gate(AvatarId i, AvatarId j) const {
  return combined(i, j) >= theta_;
}

std::vector<MoveOption> preference_order(AvatarId avatar,
                                         const Partition& partition,
                                         const RejectionRecord& rejections,
                                         const ProfileMap& profiles,
                                         const QualityParams& params,
                                         const TrustCache& trust) {
  AvatarId home = partition.cluster_of(avatar);
  double current =
      individual_payoff(avatar, partition.members_of(home), profiles, params);

  std::vector<MoveOption> options;
  for (const auto& [cid, members] : partition.clusters()) {
    if (cid == home) continue;
    bool trusted = true;
    for (AvatarId m : members) {
      if (!trust.gate(avatar, m)) {
        trusted = false;
        break;
      }
    }
    if (!trusted) continue;
    if (rejections.contains(avatar, composition_hash(members))) continue;
    auto joined = members;
    joined.insert(avatar);
    double prospective = individual_payoff(avatar, joined, profiles, params);
    if (prospective > current) options.push_back({cid, prospective});
  }
  double solo = noncoop_payoff(avatar, profiles, params);
  if (solo > current) options.push_back({std::nullopt, solo});

  std::stable_sort(options.begin(), options.end(),
                   [](const MoveOption& x, const MoveOption& y) {
                     if (x.prospective_payoff != y.prospective_payoff)
                       return x.prospective_payoff > y.prospective_payoff;
                     if (x.target_cluster && y.target_cluster)
                       return *x.target_cluster < *y.target_cluster;
                     return x.target_cluster.has_value();  // singleton last
                   });
  return options;
}

AdmissionResult admit_candidate(const std::set<AvatarId>& cluster,
                                const std::vector<AvatarId>& candidates,
                                const ProfileMap& profiles,
                                const QualityParams& params) {
  AdmissionResult result;
  if (candidates.empty()) return result;

  double base_payoff = federated_payoff(cluster, profiles, params);
  std::map<AvatarId, double> before;
  for (AvatarId m : cluster)
    before[m] = individual_payoff(m, cluster, profiles, params);

  std::optional<AvatarId> best;
  double best_gain = 0.0;
  for (AvatarId cand : candidates) {
    if (cluster.contains(cand))
      throw InvalidInputError("admit_candidate: candidate already a member");
    auto joined = cluster;
    joined.insert(cand);
    bool none_worse = true;
    bool some_better = false;
    for (AvatarId m : cluster) {
      double after = individual_payoff(m, joined, profiles, params);
      if (after < before[m]) {
        none_worse = false;
        break;
      }
      if (after > before[m]) some_better = true;
    }
    if (!(none_worse && some_better)) continue;
    double gain = federated_payoff(joined, profiles, params) - base_payoff;
    if (!best || gain > best_gain || (gain == best_gain && cand < *best)) {
      best = cand;
      best_gain = gain;
    }
  }
  result.admitted = best;
  for (AvatarId cand : candidates)
    if (!best || cand != *best) result.rejected.push_back(cand);
  return result;
}

double mean_individual_payoff(const Partition& partition,
                              const ProfileMap& profiles,
                              const QualityParams& params) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [cid, members] : partition.clusters()) {
    for (AvatarId m : members) {
      sum += individual_payoff(m, members, profiles, params);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

GameTrace form_stable_partition(const graph::SocialGraph& g,
                                const ProfileMap& profiles,
                                const QualityParams& params,
                                const graph::TrustParams& trust_params,
                                std::size_t max_iter) {
  if (max_iter < 1)
    throw InvalidInputError("form_stable_partition: max_iter must be >= 1");
  auto ids = g.avatar_ids();
  for (AvatarId id : ids) validate_profile(profile_of(profiles, id));

  TrustCache trust(g, trust_params);
  GameTrace trace;
  trace.final_partition = Partition::singletons(ids);
  Partition& partition = trace.final_partition;
  RejectionRecord rejections;

  auto record = [&](std::size_t iteration, std::size_t moved) {
    trace.avg_payoff_series.push_back(
        {iteration, mean_individual_payoff(partition, profiles, params),
         partition.num_clusters(), moved});
  };
  record(0, 0);

  for (std::size_t pass = 1; pass <= max_iter; ++pass) {
    std::size_t moved = 0;
    for (AvatarId avatar : ids) {
      // Walk the preference list until some cluster admits the avatar, it
      // forms a singleton, or every improving option has rejected it.
      for (;;) {
        auto options =
            preference_order(avatar, partition, rejections, profiles, params, trust);
        if (options.empty()) break;
        const MoveOption& top = options.front();
        if (!top.target_cluster) {
          partition.move(avatar, std::nullopt);
          ++moved;
          break;
        }
        const auto& members = partition.members_of(*top.target_cluster);
        auto outcome = admit_candidate(members, {avatar}, profiles, params);
        if (outcome.admitted == avatar) {
          partition.move(avatar, *top.target_cluster);
          ++moved;
          break;
        }
        rejections.add(avatar, composition_hash(members));
      }
    }
    record(pass, moved);
    trace.iterations = pass;
    if (moved == 0) return trace;
  }
  trace.truncated = true;
  return trace;
}

bool is_nash_stable(const Partition& partition, const ProfileMap& profiles,
                    const QualityParams& params, const graph::SocialGraph& g,
                    const graph::TrustParams& trust_params) {
  TrustCache trust(g, trust_params);
  for (const auto& [home, members] : partition.clusters()) {
    for (AvatarId avatar : members) {
      double current = individual_payoff(avatar, members, profiles, params);
      if (members.size() > 1 &&
          noncoop_payoff(avatar, profiles, params) > current)
        return false;
      for (const auto& [cid, target] : partition.clusters()) {
        if (cid == home) continue;
        bool trusted = true;
        for (AvatarId m : target) {
          if (!trust.gate(avatar, m)) {
            trusted = false;
            break;
          }
        }
        if (!trusted) continue;
        auto joined = target;
        joined.insert(avatar);
        if (individual_payoff(avatar, joined, profiles, params) <= current)
          continue;
        auto outcome = admit_candidate(target, {avatar}, profiles, params);
        if (outcome.admitted == avatar) return false;
      }
    }
  }
  return true;
}

}  // namespace socialfl::coalition
