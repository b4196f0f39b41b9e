#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <socialfl/coalition.hpp>
#include <socialfl/rng.hpp>
#include <socialfl/social_graph.hpp>

#include <cmath>
#include <optional>
#include <set>
#include <vector>

using namespace socialfl;
using namespace socialfl::coalition;

namespace {

std::vector<graph::Interaction> pinned(double strength) {
  return {graph::Interaction{strength, 1e15, 0.0}};
}

graph::SocialGraph complete_graph(const std::vector<AvatarId>& ids,
                                  double strength = 1.0) {
  graph::TrustParams tp;
  graph::SocialGraph g(0.0);
  for (auto id : ids) g.add_avatar(id);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      g.add_edge(ids[i], ids[j], pinned(strength), tp);
  return g;
}

ProfileMap identical_profiles(std::size_t n, double d, double q) {
  ProfileMap m;
  for (std::size_t i = 0; i < n; ++i)
    m[static_cast<AvatarId>(i)] = {static_cast<AvatarId>(i), d, q};
  return m;
}

// Independent brute-force deviation check: an avatar beats the partition iff
// some unilateral move strictly improves it and the target cluster's members
// all weakly gain (with one strict) from admitting it.
bool has_improving_admitted_move(const Partition& part,
                                 const ProfileMap& profiles,
                                 const QualityParams& params,
                                 const graph::SocialGraph& g,
                                 const graph::TrustParams& tp) {
  for (const auto& [id, profile] : profiles) {
    const auto& own = part.members_of(part.cluster_of(id));
    double current = individual_payoff(id, own, profiles, params);

    if (own.size() > 1 &&
        noncoop_payoff(id, profiles, params) > current + 1e-12)
      return true;

    for (const auto& [cid, members] : part.clusters()) {
      if (members.contains(id)) continue;
      bool trusted = true;
      for (auto m : members)
        if (graph::combined_trust(g, id, m, tp) < tp.theta_trust)
          trusted = false;
      if (!trusted) continue;

      std::set<AvatarId> joined = members;
      joined.insert(id);
      if (individual_payoff(id, joined, profiles, params) <= current + 1e-12)
        continue;
      bool none_worse = true;
      bool one_better = false;
      for (auto m : members) {
        double before = individual_payoff(m, members, profiles, params);
        double after = individual_payoff(m, joined, profiles, params);
        if (after < before - 1e-12) none_worse = false;
        if (after > before + 1e-12) one_better = true;
      }
      if (none_worse && one_better) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("cluster_utility matches hand-evaluated values") {
  QualityParams p;  // u_max=1, kappa=10, beta=0.2, sigma=1
  auto profiles = identical_profiles(2, 4.0, 1.0);
  CHECK(cluster_utility({0}, profiles, p) ==
        doctest::Approx(0.085714285714).epsilon(1e-9));
  CHECK(cluster_utility({0, 1}, profiles, p) ==
        doctest::Approx(0.344444444444).epsilon(1e-9));

  QualityParams no_noise = p;
  no_noise.sigma_dp = 0.0;
  auto tiny = identical_profiles(1, 1e-12, 1.0);
  CHECK(cluster_utility({0}, tiny, no_noise) ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("federated_payoff subtracts the linear member cost") {
  QualityParams p;  // cost_per_member = 0.01
  auto profiles = identical_profiles(2, 4.0, 1.0);
  CHECK(federated_payoff({0}, profiles, p) ==
        doctest::Approx(0.075714285714).epsilon(1e-9));
  CHECK(federated_payoff({0, 1}, profiles, p) ==
        doctest::Approx(0.324444444444).epsilon(1e-9));

  QualityParams free = p;
  free.cost_per_member = 0.0;
  CHECK(federated_payoff({0, 1}, profiles, free) ==
        cluster_utility({0, 1}, profiles, free));
}

TEST_CASE("noncoop_payoff is the singleton federated payoff") {
  QualityParams p;
  RngStream fuzz(808);
  ProfileMap profiles;
  for (AvatarId id = 0; id < 20; ++id)
    profiles[id] = {id, fuzz.uniform(1.0, 10.0), fuzz.uniform(0.5, 1.0)};
  for (const auto& [id, prof] : profiles)
    CHECK(noncoop_payoff(id, profiles, p) ==
          federated_payoff({id}, profiles, p));

  auto twins = identical_profiles(2, 4.0, 1.0);
  CHECK(noncoop_payoff(0, twins, p) == noncoop_payoff(1, twins, p));
  CHECK(noncoop_payoff(0, twins, p) ==
        doctest::Approx(0.075714285714).epsilon(1e-9));
}

TEST_CASE("individual_payoff splits the surplus by contribution share") {
  QualityParams p;
  auto profiles = identical_profiles(2, 4.0, 1.0);

  CHECK(individual_payoff(0, {0}, profiles, p) ==
        doctest::Approx(noncoop_payoff(0, profiles, p)).epsilon(1e-12));
  CHECK(individual_payoff(0, {0, 1}, profiles, p) ==
        doctest::Approx(0.162222222222).epsilon(1e-9));
  CHECK(individual_payoff(1, {0, 1}, profiles, p) ==
        doctest::Approx(0.162222222222).epsilon(1e-9));
  CHECK_THROWS_AS(individual_payoff(1, {0}, profiles, p), InvalidInputError);
}

TEST_CASE("budget balance and contribution shares hold on fuzzed clusters") {
  RngStream fuzz(515151);
  for (int trial = 0; trial < 200; ++trial) {
    QualityParams p;
    p.cost_per_member = fuzz.uniform(0.0, 0.1);
    p.sigma_dp = fuzz.uniform(0.0, 2.0);
    std::size_t size = 1 + fuzz.uniform_index(8);
    ProfileMap profiles;
    std::set<AvatarId> cluster;
    double total_contribution = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      AvatarId id = static_cast<AvatarId>(i);
      profiles[id] = {id, fuzz.uniform(1.0, 10.0), fuzz.uniform(0.5, 1.0)};
      cluster.insert(id);
      total_contribution += contribution_of(profiles[id]);
    }
    double sum_phi = 0.0;
    double sum_w = 0.0;
    for (auto id : cluster) {
      sum_phi += individual_payoff(id, cluster, profiles, p);
      sum_w += contribution_of(profiles.at(id)) / total_contribution;
    }
    CHECK(sum_phi ==
          doctest::Approx(federated_payoff(cluster, profiles, p))
              .scale(1.0).epsilon(1e-9));
    CHECK(sum_w == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("preference_order ranks strictly improving options by payoff") {
  QualityParams qp;
  graph::TrustParams tp;
  ProfileMap profiles;
  // Cluster A = {0,1} is data-rich, cluster B = {2} less so; avatar 9 is a
  // singleton that would gain from either.
  profiles[0] = {0, 5.0, 1.0};
  profiles[1] = {1, 5.0, 1.0};
  profiles[2] = {2, 8.0, 1.0};
  profiles[9] = {9, 2.0, 1.0};
  std::vector<AvatarId> ids = {0, 1, 2, 9};
  auto g = complete_graph(ids);
  TrustCache trust(g, tp);

  Partition part = Partition::singletons(ids);
  part.move(1, 0);  // form {0,1}

  double to_a = individual_payoff(9, {0, 1, 9}, profiles, qp);
  double to_b = individual_payoff(9, {2, 9}, profiles, qp);
  double solo = noncoop_payoff(9, profiles, qp);
  REQUIRE(to_a > solo);
  REQUIRE(to_b > solo);

  RejectionRecord none;
  auto options = preference_order(9, part, none, profiles, qp, trust);
  REQUIRE(options.size() == 2);  // the stay-solo option is not an improvement
  CHECK(options[0].prospective_payoff ==
        doctest::Approx(std::max(to_a, to_b)).epsilon(1e-12));
  CHECK(options[1].prospective_payoff ==
        doctest::Approx(std::min(to_a, to_b)).epsilon(1e-12));
  CHECK(options[0].prospective_payoff >= options[1].prospective_payoff);
  CHECK(options[0].target_cluster.has_value());
  CHECK(options[1].target_cluster.has_value());

  // A rejection recorded against the current composition hides that cluster.
  RejectionRecord rejected;
  AvatarId best = *options[0].target_cluster;
  rejected.add(9, composition_hash(part.members_of(best)));
  auto remaining = preference_order(9, part, rejected, profiles, qp, trust);
  REQUIRE(remaining.size() == 1);
  CHECK(*remaining[0].target_cluster == *options[1].target_cluster);
}

TEST_CASE("preference_order is empty when nothing improves") {
  QualityParams qp;
  graph::TrustParams tp;
  // Saturated data: every merge destroys surplus, so the singleton stays.
  auto profiles = identical_profiles(3, 50.0, 1.0);
  std::vector<AvatarId> ids = {0, 1, 2};
  auto g = complete_graph(ids);
  TrustCache trust(g, tp);
  Partition part = Partition::singletons(ids);
  RejectionRecord none;
  CHECK(preference_order(0, part, none, profiles, qp, trust).empty());
}

TEST_CASE("admit_candidate applies the Pareto rule") {
  QualityParams qp;
  auto profiles = identical_profiles(4, 4.0, 1.0);

  AdmissionResult empty = admit_candidate({0}, {}, profiles, qp);
  CHECK_FALSE(empty.admitted.has_value());
  CHECK(empty.rejected.empty());

  // Joining a twin raises the singleton's payoff (0.0757 -> 0.1622).
  AdmissionResult good = admit_candidate({0}, {1}, profiles, qp);
  REQUIRE(good.admitted.has_value());
  CHECK(*good.admitted == 1);
  CHECK(good.rejected.empty());

  // A third member would drop each pair member to below its pair payoff.
  double pair_payoff = individual_payoff(0, {0, 1}, profiles, qp);
  double trio_payoff = individual_payoff(0, {0, 1, 2}, profiles, qp);
  REQUIRE(trio_payoff < pair_payoff);
  AdmissionResult bad = admit_candidate({0, 1}, {2}, profiles, qp);
  CHECK_FALSE(bad.admitted.has_value());
  REQUIRE(bad.rejected.size() == 1);
  CHECK(bad.rejected[0] == 2);
}

TEST_CASE("admit_candidate picks the largest federated gain among eligible") {
  QualityParams qp;
  ProfileMap profiles;
  profiles[0] = {0, 2.0, 1.0};
  profiles[5] = {5, 3.0, 1.0};   // smaller gain
  profiles[7] = {7, 9.0, 1.0};   // larger gain
  double gain5 = federated_payoff({0, 5}, profiles, qp) -
                 federated_payoff({0}, profiles, qp);
  double gain7 = federated_payoff({0, 7}, profiles, qp) -
                 federated_payoff({0}, profiles, qp);
  REQUIRE(gain7 > gain5);

  AdmissionResult result = admit_candidate({0}, {5, 7}, profiles, qp);
  REQUIRE(result.admitted.has_value());
  CHECK(*result.admitted == 7);
  REQUIRE(result.rejected.size() == 1);
  CHECK(result.rejected[0] == 5);
}

TEST_CASE("form_stable_partition on one avatar") {
  QualityParams qp;
  graph::TrustParams tp;
  auto profiles = identical_profiles(1, 4.0, 1.0);
  graph::SocialGraph g(0.0);
  g.add_avatar(0);
  auto trace = form_stable_partition(g, profiles, qp, tp);
  CHECK(trace.iterations == 1);
  CHECK_FALSE(trace.truncated);
  CHECK(trace.final_partition.num_clusters() == 1);
  CHECK(trace.avg_payoff_series.size() == trace.iterations + 1);
}

TEST_CASE("two identical trusted avatars pair up") {
  QualityParams qp;
  graph::TrustParams tp;
  auto profiles = identical_profiles(2, 4.0, 1.0);
  auto g = complete_graph({0, 1});
  auto trace = form_stable_partition(g, profiles, qp, tp);
  CHECK_FALSE(trace.truncated);
  REQUIRE(trace.final_partition.num_clusters() == 1);
  const auto& members = trace.final_partition.clusters().begin()->second;
  CHECK(members == std::set<AvatarId>{0, 1});
  CHECK(individual_payoff(0, members, profiles, qp) ==
        doctest::Approx(0.162222222222).epsilon(1e-9));
  CHECK(is_nash_stable(trace.final_partition, profiles, qp, g, tp));
  // Pair payoff beats the solo fallback, confirming the move was improving.
  CHECK(individual_payoff(0, members, profiles, qp) >
        noncoop_payoff(0, profiles, qp));
}

TEST_CASE("low trust blocks otherwise profitable mergers") {
  QualityParams qp;
  graph::TrustParams tp;  // theta_trust = 0.5
  auto profiles = identical_profiles(2, 4.0, 1.0);
  auto g = complete_graph({0, 1}, 0.3);
  auto trace = form_stable_partition(g, profiles, qp, tp);
  CHECK(trace.final_partition.num_clusters() == 2);
}

TEST_CASE("saturated data makes the grand coalition unstable") {
  QualityParams qp;
  graph::TrustParams tp;
  // At d*q = 50 the utility saturates: one cluster of three earns less than
  // three singletons, so the shared surplus is negative and exits improve.
  auto profiles = identical_profiles(3, 50.0, 1.0);
  auto g = complete_graph({0, 1, 2});

  Partition grand = Partition::singletons({0, 1, 2});
  grand.move(1, 0);
  grand.move(2, 0);
  REQUIRE(grand.num_clusters() == 1);
  CHECK(noncoop_payoff(0, profiles, qp) >
        individual_payoff(0, {0, 1, 2}, profiles, qp));
  CHECK_FALSE(is_nash_stable(grand, profiles, qp, g, tp));

  Partition singles = Partition::singletons({0, 1, 2});
  CHECK(is_nash_stable(singles, profiles, qp, g, tp));

  auto trace = form_stable_partition(g, profiles, qp, tp);
  CHECK_FALSE(trace.truncated);
  CHECK(trace.final_partition.num_clusters() == 3);
}

TEST_CASE("formed partitions beat brute-force deviation search") {
  graph::TrustParams tp;
  RngStream fuzz(272727);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = 3 + trial % 6;  // 3..8
    QualityParams qp;
    qp.cost_per_member = fuzz.uniform(0.0, 0.05);
    ProfileMap profiles;
    std::vector<AvatarId> ids;
    for (std::size_t i = 0; i < n; ++i) {
      AvatarId id = static_cast<AvatarId>(i);
      ids.push_back(id);
      profiles[id] = {id, fuzz.uniform(1.0, 10.0), fuzz.uniform(0.5, 1.0)};
    }
    auto g = graph::random_graph(n, 0.7, fuzz.next_u64());
    auto trace = form_stable_partition(g, profiles, qp, tp);
    REQUIRE_FALSE(trace.truncated);
    CHECK(trace.final_partition.is_valid(
        std::set<AvatarId>(ids.begin(), ids.end())));
    CHECK_FALSE(has_improving_admitted_move(trace.final_partition, profiles,
                                            qp, g, tp));
    CHECK(is_nash_stable(trace.final_partition, profiles, qp, g, tp));
  }
}

TEST_CASE("emitted clusters satisfy the pairwise trust gate") {
  graph::TrustParams tp;
  QualityParams qp;
  RngStream fuzz(99221);
  ProfileMap profiles;
  std::size_t n = 16;
  for (std::size_t i = 0; i < n; ++i) {
    AvatarId id = static_cast<AvatarId>(i);
    profiles[id] = {id, fuzz.uniform(1.0, 10.0), fuzz.uniform(0.5, 1.0)};
  }
  auto g = graph::random_graph(n, 0.4, 321);
  auto trace = form_stable_partition(g, profiles, qp, tp);
  for (const auto& [cid, members] : trace.final_partition.clusters()) {
    for (auto i : members)
      for (auto j : members) {
        if (i >= j) continue;
        CHECK(graph::combined_trust(g, i, j, tp) >= tp.theta_trust);
      }
  }
}

TEST_CASE("cooperation never hurts the average payoff") {
  graph::TrustParams tp;
  QualityParams qp;
  RngStream fuzz(606);
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t n = 12;
    ProfileMap profiles;
    for (std::size_t i = 0; i < n; ++i) {
      AvatarId id = static_cast<AvatarId>(i);
      profiles[id] = {id, fuzz.uniform(1.0, 10.0), fuzz.uniform(0.5, 1.0)};
    }
    auto g = graph::random_graph(n, 0.5, fuzz.next_u64());
    auto trace = form_stable_partition(g, profiles, qp, tp);
    double baseline = 0.0;
    for (const auto& [id, prof] : profiles)
      baseline += noncoop_payoff(id, profiles, qp);
    baseline /= static_cast<double>(n);
    CHECK(mean_individual_payoff(trace.final_partition, profiles, qp) >=
          baseline - 1e-12);
  }
}

TEST_CASE("game trace bookkeeping") {
  graph::TrustParams tp;
  QualityParams qp;
  auto profiles = identical_profiles(6, 4.0, 1.0);
  auto g = complete_graph({0, 1, 2, 3, 4, 5});
  auto trace = form_stable_partition(g, profiles, qp, tp);
  CHECK(trace.avg_payoff_series.size() == trace.iterations + 1);
  CHECK(trace.avg_payoff_series.front().iteration == 0);
  CHECK(trace.avg_payoff_series.back().iteration == trace.iterations);
  CHECK(trace.avg_payoff_series.back().moved_count == 0);
  CHECK(trace.avg_payoff_series.back().mean_individual_payoff >=
        trace.avg_payoff_series.front().mean_individual_payoff);
}

TEST_CASE("max_iter exhaustion reports truncation") {
  graph::TrustParams tp;
  QualityParams qp;
  auto profiles = identical_profiles(8, 4.0, 1.0);
  auto g = complete_graph({0, 1, 2, 3, 4, 5, 6, 7});
  auto trace = form_stable_partition(g, profiles, qp, tp, 1);
  // One pass cannot settle eight avatars that all want to coalesce.
  CHECK(trace.truncated);
  CHECK(trace.iterations == 1);
}
