#include "socialfl/social_graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "socialfl/rng.hpp"

namespace socialfl::graph {

namespace {

std::pair<AvatarId, AvatarId> ordered(AvatarId a, AvatarId b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

void validate_interaction(const Interaction& x, double now) {
  if (x.experience < 0.0 || x.experience > 1.0)
    throw InvalidInputError("interaction: experience must be in [0,1]");
  if (x.duration < 0.0)
    throw InvalidInputError("interaction: duration must be >= 0");
  if (x.timestamp < 0.0)
    throw InvalidInputError("interaction: timestamp must be >= 0");
  if (x.timestamp > now)
    throw InvalidInputError("interaction: timestamp is in the future");
}

}  // namespace

void SocialGraph::add_avatar(AvatarId id) {
  avatars_.insert(id);
  adjacency_.try_emplace(id);
}

void SocialGraph::add_edge(AvatarId a, AvatarId b,
                           std::vector<Interaction> history,
                           const TrustParams& params) {
  if (a == b) throw InvalidInputError("add_edge: self-loops are not allowed");
  require_avatar(a);
  require_avatar(b);
  double tie = direct_trust(history, now_, params);
  auto key = ordered(a, b);
  edges_[key] = SocialEdge{key.first, key.second, std::move(history), tie};
  adjacency_[a].insert(b);
  adjacency_[b].insert(a);
}

bool SocialGraph::has_edge(AvatarId a, AvatarId b) const {
  return edges_.contains(ordered(a, b));
}

std::vector<AvatarId> SocialGraph::avatar_ids() const {
  return {avatars_.begin(), avatars_.end()};
}

std::vector<AvatarId> SocialGraph::neighbors(AvatarId i) const {
  require_avatar(i);
  const auto& adj = adjacency_.at(i);
  return {adj.begin(), adj.end()};
}

double SocialGraph::tie_strength(AvatarId a, AvatarId b) const {
  auto it = edges_.find(ordered(a, b));
  return it == edges_.end() ? 0.0 : it->second.tie_strength;
}

const SocialEdge& SocialGraph::edge(AvatarId a, AvatarId b) const {
  auto it = edges_.find(ordered(a, b));
  if (it == edges_.end())
    throw NotFoundError("edge: no edge between " + std::to_string(a) +
                        " and " + std::to_string(b));
  return it->second;
}

void SocialGraph::require_avatar(AvatarId id) const {
  if (!avatars_.contains(id))
    throw InvalidInputError("unknown avatar id " + std::to_string(id));
}

double direct_trust(std::span<const Interaction> history, double now,
                    const TrustParams& params) {
  double sum = 0.0;
  for (const auto& x : history) {
    validate_interaction(x, now);
    double saturation = 1.0 - std::exp(-x.duration / params.tau_duration);
    double decay = std::exp(-params.lambda_decay * (now - x.timestamp));
    sum += x.experience * saturation * decay;
  }
  return std::min(1.0, sum);
}

double indirect_trust(const SocialGraph& g, AvatarId i, AvatarId j,
                      const TrustParams&) {
  g.require_avatar(i);
  g.require_avatar(j);
  if (i == j) return 1.0;

  // BFS hop distances from i, then a max-product sweep over the shortest-path
  // DAG.  Products are non-negative, so the per-level maximum is exact.
  std::map<AvatarId, std::size_t> dist;
  std::map<AvatarId, double> best;
  std::deque<AvatarId> queue;
  dist[i] = 0;
  best[i] = 1.0;
  queue.push_back(i);
  while (!queue.empty()) {
    AvatarId u = queue.front();
    queue.pop_front();
    if (u == j) break;  // all nodes at dist[j] or less are finalized below
    for (AvatarId v : g.neighbors(u)) {
      if (!dist.contains(v)) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  if (!dist.contains(j)) return 0.0;

  // Sweep nodes level by level up to dist[j]; neighbors() and the map's id
  // order make the result independent of discovery order.
  std::size_t target = dist[j];
  std::vector<std::vector<AvatarId>> levels(target + 1);
  for (const auto& [v, d] : dist)
    if (d <= target) levels[d].push_back(v);
  for (std::size_t d = 1; d <= target; ++d) {
    for (AvatarId v : levels[d]) {
      double b = 0.0;
      for (AvatarId u : g.neighbors(v)) {
        auto it = dist.find(u);
        if (it != dist.end() && it->second + 1 == d && best.contains(u))
          b = std::max(b, best[u] * g.tie_strength(u, v));
      }
      best[v] = b;
    }
  }
  return best[j];
}

double combined_trust(const SocialGraph& g, AvatarId i, AvatarId j,
                      const TrustParams& params) {
  if (i == j)
    throw InvalidInputError("combined_trust: avatar ids must differ");
  g.require_avatar(i);
  g.require_avatar(j);
  double direct = g.tie_strength(i, j);
  double indirect = indirect_trust(g, i, j, params);
  return params.alpha_mix * direct + (1.0 - params.alpha_mix) * indirect;
}

double social_impact(const SocialGraph& g, AvatarId i) {
  g.require_avatar(i);
  double sum = 0.0;
  for (AvatarId j : g.neighbors(i)) sum += g.tie_strength(i, j);
  return sum;
}

SocialGraph random_graph(std::size_t n, double density, std::uint64_t seed) {
  if (n < 1) throw InvalidInputError("random_graph: n must be >= 1");
  if (density < 0.0 || density > 1.0)
    throw InvalidInputError("random_graph: density must be in [0,1]");
  SocialGraph g(0.0);
  for (std::size_t i = 0; i < n; ++i)
    g.add_avatar(static_cast<AvatarId>(i));
  TrustParams params;  // tie strength below is parameter-independent
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::uint64_t pair_key = (std::uint64_t(i) << 32) | std::uint64_t(j);
      auto stream = derive_stream(seed, "graph.edge", pair_key);
      if (stream.uniform() >= density) continue;
      // Huge duration saturates the duration factor and age 0 disables the
      // decay factor, so tie_strength equals `tie` exactly for any params.
      double tie = stream.uniform();
      g.add_edge(static_cast<AvatarId>(i), static_cast<AvatarId>(j),
                 {Interaction{tie, 1e15, 0.0}}, params);
    }
  }
  return g;
}

std::string graph_to_json(const SocialGraph& g, const TrustParams&) {
  nlohmann::json out;
  out["now"] = g.now();
  out["avatars"] = g.avatar_ids();
  auto& edges = out["edges"] = nlohmann::json::array();
  for (const auto& [key, e] : g.edges()) {
    nlohmann::json je;
    je["a"] = e.a;
    je["b"] = e.b;
    auto& hist = je["history"] = nlohmann::json::array();
    for (const auto& x : e.history)
      hist.push_back({{"experience", x.experience},
                      {"duration", x.duration},
                      {"timestamp", x.timestamp}});
    edges.push_back(std::move(je));
  }
  return out.dump(2);
}

SocialGraph graph_from_json(const std::string& text,
                            const TrustParams& params) {
  nlohmann::json in = nlohmann::json::parse(text);
  SocialGraph g(in.at("now").get<double>());
  for (const auto& id : in.at("avatars"))
    g.add_avatar(id.get<AvatarId>());
  for (const auto& je : in.at("edges")) {
    std::vector<Interaction> history;
    for (const auto& jx : je.at("history"))
      history.push_back(Interaction{jx.at("experience").get<double>(),
                                    jx.at("duration").get<double>(),
                                    jx.at("timestamp").get<double>()});
    g.add_edge(je.at("a").get<AvatarId>(), je.at("b").get<AvatarId>(),
               std::move(history), params);
  }
  return g;
}

}  // namespace socialfl::graph
