#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "socialfl/common.hpp"

namespace socialfl::graph {

using AvatarId = std::uint32_t;

struct Interaction {
  double experience = 0.0;  // rating in [0,1]
  double duration = 0.0;    // time units, >= 0
  double timestamp = 0.0;   // time units, >= 0
};

struct TrustParams {
  double lambda_decay = 0.1;  // exponential decay per time unit
  double tau_duration = 1.0;  // duration saturation scale
  double alpha_mix = 0.7;     // direct/indirect blend weight
  double theta_trust = 0.5;   // cluster-eligibility threshold
};

struct SocialEdge {
  AvatarId a = 0;  // a < b
  AvatarId b = 0;
  std::vector<Interaction> history;
  double tie_strength = 0.0;  // cached direct_trust(history, now)
};

// Undirected avatar graph with per-edge interaction histories.  Tie
// strengths are refreshed from the edge history whenever an edge is added,
// so cached values always reflect the graph's `now`.
class SocialGraph {
 public:
  explicit SocialGraph(double now = 0.0) : now_(now) {}

  void add_avatar(AvatarId id);
  void add_edge(AvatarId a, AvatarId b, std::vector<Interaction> history,
                const TrustParams& params);

  bool has_avatar(AvatarId id) const { return avatars_.contains(id); }
  bool has_edge(AvatarId a, AvatarId b) const;
  std::size_t num_avatars() const { return avatars_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  double now() const { return now_; }

  std::vector<AvatarId> avatar_ids() const;           // ascending
  std::vector<AvatarId> neighbors(AvatarId i) const;  // ascending
  // Cached tie strength; 0 if no edge.
  double tie_strength(AvatarId a, AvatarId b) const;
  const SocialEdge& edge(AvatarId a, AvatarId b) const;
  const std::map<std::pair<AvatarId, AvatarId>, SocialEdge>& edges() const {
    return edges_;
  }

  void require_avatar(AvatarId id) const;

 private:
  std::set<AvatarId> avatars_;
  std::map<AvatarId, std::set<AvatarId>> adjacency_;
  std::map<std::pair<AvatarId, AvatarId>, SocialEdge> edges_;  // key a < b
  double now_ = 0.0;
};

// Capped sum over interactions of
//   experience * (1 - exp(-duration/tau)) * exp(-lambda * (now - timestamp)).
double direct_trust(std::span<const Interaction> history, double now,
                    const TrustParams& params);

// Product of tie strengths along a minimum-hop path from i to j; among
// equal-hop paths the maximum product wins, then the lexicographically
// smallest node sequence.  0 if disconnected, 1 if i == j.
double indirect_trust(const SocialGraph& g, AvatarId i, AvatarId j,
                      const TrustParams& params);

// alpha * direct + (1 - alpha) * indirect, direct = 0 when no edge.
double combined_trust(const SocialGraph& g, AvatarId i, AvatarId j,
                      const TrustParams& params);

// Sum of tie strengths to all neighbors (trust-weighted degree).
double social_impact(const SocialGraph& g, AvatarId i);

// Erdős–Rényi graph over avatars 0..n-1; each present edge carries one
// synthetic interaction whose tie strength is uniform on [0,1).
SocialGraph random_graph(std::size_t n, double density, std::uint64_t seed);

// Structured-text (JSON) serialization: node list plus edge triples.
std::string graph_to_json(const SocialGraph& g, const TrustParams& params);
SocialGraph graph_from_json(const std::string& text,
                            const TrustParams& params);

}  // namespace socialfl::graph
