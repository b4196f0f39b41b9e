#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "socialfl/common.hpp"
#include "socialfl/social_graph.hpp"

namespace socialfl::coalition {

using graph::AvatarId;

struct AvatarProfile {
  AvatarId id = 0;
  double data_size = 1.0;     // d_i > 0, in samples
  double data_quality = 1.0;  // q_i in (0,1]
};

struct QualityParams {
  double u_max = 1.0;            // utility ceiling
  double kappa = 10.0;           // data saturation constant
  double beta = 0.2;             // noise penalty weight
  double sigma_dp = 1.0;         // DP noise std feeding the penalty
  double cost_per_member = 0.01; // federated cost per avatar
};

using ProfileMap = std::map<AvatarId, AvatarProfile>;

void validate_profile(const AvatarProfile& p);
const AvatarProfile& profile_of(const ProfileMap& profiles, AvatarId id);

// Effective samples d_i * q_i, the learning-contribution proxy.
double contribution_of(const AvatarProfile& p);

// Disjoint clusters covering all avatars.  A cluster is keyed by its lowest
// member id; keys are remapped automatically as membership changes.
class Partition {
 public:
  static Partition singletons(const std::vector<AvatarId>& ids);

  const std::map<AvatarId, std::set<AvatarId>>& clusters() const {
    return clusters_;
  }
  std::size_t num_clusters() const { return clusters_.size(); }
  AvatarId cluster_of(AvatarId avatar) const;
  const std::set<AvatarId>& members_of(AvatarId cluster_id) const;

  // Moves `avatar` into the cluster keyed `target` (std::nullopt forms a new
  // singleton).  Keys of the affected clusters are recomputed.
  void move(AvatarId avatar, std::optional<AvatarId> target);

  bool is_valid(const std::set<AvatarId>& universe) const;

 private:
  std::map<AvatarId, std::set<AvatarId>> clusters_;
  std::map<AvatarId, AvatarId> owner_;
};

// Rejections are keyed to the exact membership the rejecting cluster had, so
// they expire as soon as the cluster changes.
Digest composition_hash(const std::set<AvatarId>& members);

class RejectionRecord {
 public:
  void add(AvatarId avatar, const Digest& composition);
  bool contains(AvatarId avatar, const Digest& composition) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::set<std::pair<AvatarId, Digest>> entries_;
};

// U(C) = u_max * D/(D + kappa) - beta * sigma^2 / |C|,  D = sum d_i q_i.
double cluster_utility(const std::set<AvatarId>& cluster,
                       const ProfileMap& profiles, const QualityParams& params);

// P(C) = U(C) - c * |C|.
double federated_payoff(const std::set<AvatarId>& cluster,
                        const ProfileMap& profiles,
                        const QualityParams& params);

// Payoff of the singleton {avatar}.
double noncoop_payoff(AvatarId avatar, const ProfileMap& profiles,
                      const QualityParams& params);

// phi_i = p_i + w_i * (P(C) - sum_j p_j), w_i = contribution share.
double individual_payoff(AvatarId avatar, const std::set<AvatarId>& cluster,
                         const ProfileMap& profiles,
                         const QualityParams& params);

// Pairwise combined trust precomputed once per immutable graph.
class TrustCache {
 public:
  TrustCache(const graph::SocialGraph& g, const graph::TrustParams& params);
  double combined(AvatarId i, AvatarId j) const;
  bool gate(AvatarId i, AvatarId j) const;  // combined >= theta_trust

 private:
  std::map<AvatarId, std::size_t> index_;
  std::vector<double> values_;
  double theta_ = 0.5;
};

struct MoveOption {
  std::optional<AvatarId> target_cluster;  // nullopt = form a singleton
  double prospective_payoff = 0.0;
};

// Strictly improving options for `avatar`, best first: clusters passing the
// trust gate and not on record as having rejected this composition, plus the
// form-a-singleton option.  Ties rank lower cluster ids first and the
// singleton option last.
std::vector<MoveOption> preference_order(AvatarId avatar,
                                         const Partition& partition,
                                         const RejectionRecord& rejections,
                                         const ProfileMap& profiles,
                                         const QualityParams& params,
                                         const TrustCache& trust);

struct AdmissionResult {
  std::optional<AvatarId> admitted;
  std::vector<AvatarId> rejected;
};

// Pareto admission: a candidate is eligible iff no member's payoff drops and
// at least one strictly rises; the cluster admits the eligible candidate
// with the largest federated-payoff gain (ties to the lowest id).
AdmissionResult admit_candidate(const std::set<AvatarId>& cluster,
                                const std::vector<AvatarId>& candidates,
                                const ProfileMap& profiles,
                                const QualityParams& params);

struct IterationStats {
  std::size_t iteration = 0;
  double mean_individual_payoff = 0.0;
  std::size_t num_clusters = 0;
  std::size_t moved_count = 0;
};

struct GameTrace {
  std::size_t iterations = 0;
  std::vector<IterationStats> avg_payoff_series;  // length iterations + 1
  Partition final_partition;
  bool truncated = false;
};

// Best-response dynamics from the all-singleton start.  Avatars are
// processed in ascending id order; each walks its preference list until a
// cluster admits it (or it forms a singleton), recording rejections along
// the way.  A full pass without membership changes means no admitted
// improving deviation remains, i.e. Nash stability.
GameTrace form_stable_partition(const graph::SocialGraph& g,
                                const ProfileMap& profiles,
                                const QualityParams& params,
                                const graph::TrustParams& trust_params,
                                std::size_t max_iter = 1000);

// Oracle: true iff no avatar has a strictly improving unilateral move that
// the target cluster would admit (or a strictly improving exit to a
// singleton).
bool is_nash_stable(const Partition& partition, const ProfileMap& profiles,
                    const QualityParams& params, const graph::SocialGraph& g,
                    const graph::TrustParams& trust_params);

double mean_individual_payoff(const Partition& partition,
                              const ProfileMap& profiles,
                              const QualityParams& params);

}  // namespace socialfl::coalition
