#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <socialfl/hash.hpp>
#include <socialfl/provenance.hpp>
#include <socialfl/rng.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <vector>

using namespace socialfl;
using namespace socialfl::provenance;

namespace {

// One base model for the whole binary: training is the expensive part.
std::shared_ptr<const Classifier> shared_base() {
  static std::shared_ptr<const Classifier> model =
      make_base_model(ClassifierConfig{}, 4242);
  return model;
}

Dataset held_out() {
  ClassifierConfig cfg;
  BlobTask task = BlobTask::make(cfg, 4242);
  return task.sample(cfg, cfg.test_per_class, 4242, 1);
}

struct RegistrySetup {
  WatermarkRegistry registry;
  std::map<ClientId, std::vector<TriggerSample>> uploads;
};

RegistrySetup make_registry(const std::vector<ClientId>& clients,
                            std::uint64_t seed) {
  WatermarkConfig wc;
  RegistrySetup setup{WatermarkRegistry(clients), {}};
  for (ClientId c : clients) {
    auto wm = gen_private_watermark(c, seed, wc);
    std::vector<TriggerSample> upload;
    for (std::size_t idx : wm.upload_subset)
      upload.push_back(wm.samples[idx]);
    setup.uploads[c] = upload;
    setup.registry.register_upload(c, std::move(upload));
  }
  setup.registry.seal();
  return setup;
}

std::vector<TriggerSample> random_fakes(std::uint64_t seed, std::size_t n) {
  WatermarkConfig wc;
  RngStream rng(seed);
  std::vector<TriggerSample> fakes;
  for (std::size_t i = 0; i < n; ++i) {
    TriggerSample s;
    s.input.resize(wc.input_dim);
    for (auto& v : s.input) v = rng.uniform(-1.0, 1.0);
    s.hard_label = rng.uniform_index(wc.num_classes);
    fakes.push_back(std::move(s));
  }
  return fakes;
}

}  // namespace

TEST_CASE("private watermarks are seeded, bounded, and client-specific") {
  WatermarkConfig wc;  // 100 samples, 10 uploaded, 32-dim, 10 classes
  auto wm = gen_private_watermark(3, 777, wc);
  CHECK(wm.owner == 3);
  REQUIRE(wm.samples.size() == 100);
  REQUIRE(wm.upload_subset.size() == 10);
  CHECK(std::is_sorted(wm.upload_subset.begin(), wm.upload_subset.end()));
  CHECK(std::set<std::size_t>(wm.upload_subset.begin(),
                              wm.upload_subset.end()).size() == 10);
  for (std::size_t idx : wm.upload_subset) CHECK(idx < wm.samples.size());
  for (const auto& s : wm.samples) {
    REQUIRE(s.input.size() == 32);
    CHECK(s.hard_label < 10);
    for (double v : s.input) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }

  auto again = gen_private_watermark(3, 777, wc);
  CHECK(again.samples.size() == wm.samples.size());
  CHECK(again.samples[0].input == wm.samples[0].input);
  CHECK(again.upload_subset == wm.upload_subset);

  auto other_client = gen_private_watermark(4, 777, wc);
  CHECK(other_client.samples[0].input != wm.samples[0].input);
  auto other_seed = gen_private_watermark(3, 778, wc);
  CHECK(other_seed.samples[0].input != wm.samples[0].input);
}

TEST_CASE("the base model masters its task but not foreign triggers") {
  auto base = shared_base();
  CHECK(base->trained());
  CHECK(accuracy(*base, held_out()) >= 0.95);

  WatermarkConfig wc;
  auto wm = gen_private_watermark(1, 5150, wc);
  CHECK(trigger_accuracy(*base, wm.samples) <= 0.35);  // near chance
  CHECK(trigger_accuracy(*base, {}) == 0.0);
}

TEST_CASE("embedding a private watermark preserves the main task") {
  auto base = shared_base();
  WatermarkConfig wc;
  auto wm = gen_private_watermark(3, 777, wc);

  Classifier marked = embed_watermark(*base, wm.samples,
                                      base->config().embed_max_steps);
  CHECK(trigger_accuracy(marked, wm.samples) >= 0.95);
  double base_acc = accuracy(*base, held_out());
  double marked_acc = accuracy(marked, held_out());
  CHECK(marked_acc >= base_acc - 0.05);

  Classifier untouched = embed_watermark(*base, {}, 10);
  CHECK(untouched.class_weights() == base->class_weights());

  try {
    embed_watermark(*base, wm.samples, 1);
    FAIL("one step cannot reach the trigger target");
  } catch (const EmbeddingFailedError& e) {
    CHECK(e.achieved_accuracy >= 0.0);
    CHECK(e.achieved_accuracy < 0.95);
  }
}

TEST_CASE("registry is write-once and gated on completeness") {
  WatermarkConfig wc;
  WatermarkRegistry reg({1, 2, 3});
  CHECK_FALSE(reg.sealed());
  CHECK(reg.expected_clients() == std::vector<ClientId>{1, 2, 3});

  auto wm1 = gen_private_watermark(1, 9, wc);
  reg.register_upload(1, wm1.samples);
  CHECK(reg.has(1));
  CHECK_THROWS_AS(reg.register_upload(1, wm1.samples), InvalidInputError);
  CHECK_THROWS_WITH_AS(
      reg.register_upload(9, wm1.samples),
      "registry: client 9 is not a task participant", UnknownClientError);
  CHECK_THROWS_AS(reg.register_upload(2, {}), InvalidInputError);

  CHECK_THROWS_AS(reg.seal(), IncompleteRegistryError);  // 2 and 3 missing
  reg.register_upload(2, gen_private_watermark(2, 9, wc).samples);
  reg.register_upload(3, gen_private_watermark(3, 9, wc).samples);
  reg.seal();
  CHECK(reg.sealed());
  CHECK_THROWS_AS(reg.register_upload(1, wm1.samples), InvalidInputError);

  CHECK_THROWS_AS(WatermarkRegistry({1, 1}), InvalidInputError);
  CHECK_THROWS_AS(WatermarkRegistry({}), InvalidInputError);

  WatermarkRegistry unsealed({1});
  unsealed.register_upload(1, wm1.samples);
  CHECK_THROWS_AS(fuse_joint(unsealed, 1, 4, 10), IncompleteRegistryError);
}

TEST_CASE("fusion mixes inputs convexly and averages hard labels") {
  RngStream rng(4141);
  auto crafted_upload = [&](std::size_t label, std::size_t count) {
    std::vector<TriggerSample> upload;
    for (std::size_t i = 0; i < count; ++i) {
      TriggerSample s;
      s.input.resize(32);
      for (auto& v : s.input) v = rng.uniform(-1.0, 1.0);
      s.hard_label = label;
      upload.push_back(std::move(s));
    }
    return upload;
  };

  // Two clients vote class 2, one votes class 7.
  WatermarkRegistry reg({1, 2, 3});
  reg.register_upload(1, crafted_upload(2, 6));
  reg.register_upload(2, crafted_upload(2, 6));
  reg.register_upload(3, crafted_upload(7, 6));
  reg.seal();

  auto joint = fuse_joint(reg, 31415, 8, 10);
  REQUIRE(joint.fused_samples.size() == 8);
  for (const auto& fused : joint.fused_samples) {
    REQUIRE(fused.soft_label.size() == 10);
    CHECK(fused.soft_label[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(fused.soft_label[7] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    double sum = 0.0;
    for (double p : fused.soft_label) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(fused.input.size() == 32);
    for (double v : fused.input) {
      CHECK(v >= -1.0);  // convex mix of [-1,1] points stays inside
      CHECK(v <= 1.0);
    }
  }

  auto joint2 = fuse_joint(reg, 31415, 8, 10);
  CHECK(joint2.fused_samples[0].input == joint.fused_samples[0].input);
  auto joint3 = fuse_joint(reg, 31416, 8, 10);
  CHECK(joint3.fused_samples[0].input != joint.fused_samples[0].input);

  // A single registered client yields one-hot soft labels.
  WatermarkRegistry solo({5});
  solo.register_upload(5, crafted_upload(4, 3));
  solo.seal();
  auto solo_joint = fuse_joint(solo, 1, 4, 10);
  for (const auto& fused : solo_joint.fused_samples)
    CHECK(fused.soft_label[4] == doctest::Approx(1.0));
}

TEST_CASE("submission scoring accepts owners and spots copycats") {
  auto setup = make_registry({1, 2, 3}, 808);
  VerifyThresholds thresholds;

  auto honest = score_submissions(setup.registry, setup.uploads, thresholds);
  CHECK_FALSE(honest.collusion_flag);
  for (const auto& [client, score] : honest.scores)
    CHECK(score == doctest::Approx(1.0).epsilon(1e-9));

  // Client 2 parroting client 1's samples trips the report.
  auto copied = setup.uploads;
  copied[2] = setup.uploads[1];
  CHECK(score_submissions(setup.registry, copied, thresholds).collusion_flag);

  // Random fakes score near chance, far below the similarity floor.
  auto forged = setup.uploads;
  forged[3] = random_fakes(99, forged[3].size());
  auto report = score_submissions(setup.registry, forged, thresholds);
  CHECK(report.collusion_flag);
  CHECK(report.scores[3] < 0.35);
  CHECK(report.scores[3] < thresholds.s_min);

  std::map<ClientId, std::vector<TriggerSample>> unknown;
  unknown[42] = setup.uploads[1];
  CHECK_THROWS_AS(score_submissions(setup.registry, unknown, thresholds),
                  UnknownClientError);
}

TEST_CASE("joint embedding hits the gap target without hurting accuracy") {
  auto base = shared_base();
  auto setup = make_registry({1, 2, 3, 4, 5}, 999);
  auto joint = fuse_joint(setup.registry, 2718, 20, 10);

  CHECK(mean_l1_gap(*base, joint) > 0.3);  // a clean model shows no trace

  Classifier marked =
      embed_joint(*base, joint, base->config().embed_max_steps, 0.15);
  CHECK(mean_l1_gap(marked, joint) < 0.15);
  double base_acc = accuracy(*base, held_out());
  CHECK(accuracy(marked, held_out()) >= base_acc - 0.05);

  Classifier untouched = embed_joint(*base, JointWatermark{}, 10, 0.15);
  CHECK(untouched.class_weights() == base->class_weights());
  CHECK(mean_l1_gap(*base, JointWatermark{}) == 0.0);

  try {
    embed_joint(*base, joint, 1, 0.15);
    FAIL("one step cannot reach the gap target");
  } catch (const EmbeddingFailedError& e) {
    CHECK(e.achieved_accuracy > 0.15);  // carries the gap it reached
  }
}

TEST_CASE("ownership verification issues the full verdict taxonomy") {
  auto base = shared_base();
  auto setup = make_registry({1, 2, 3, 4, 5}, 1234);
  VerifyThresholds thresholds;
  std::uint64_t fusion_seed = 5678;

  auto joint = fuse_joint(setup.registry, fusion_seed, 20, 10);
  Classifier marked =
      embed_joint(*base, joint, base->config().embed_max_steps,
                  thresholds.eps_gap / 2.0);

  auto owned = verify_ownership(marked, setup.uploads, setup.registry,
                                thresholds, fusion_seed);
  CHECK(owned.verdict == Verdict::owned);
  CHECK(owned.gap < thresholds.eps_gap);
  CHECK_FALSE(owned.scoring_flag);
  CHECK(owned.missing_clients.empty());
  CHECK(owned.record_digest == sha256(owned.record_bytes));
  CHECK_FALSE(owned.record_bytes.empty());

  auto again = verify_ownership(marked, setup.uploads, setup.registry,
                                thresholds, fusion_seed);
  CHECK(again.record_bytes == owned.record_bytes);

  // One absent owner vetoes the whole verification.
  auto partial = setup.uploads;
  partial.erase(3);
  auto refused = verify_ownership(marked, partial, setup.registry, thresholds,
                                  fusion_seed);
  CHECK(refused.verdict == Verdict::refused);
  CHECK(refused.missing_clients == std::vector<ClientId>{3});
  CHECK_FALSE(refused.scoring_flag);

  // A forged submission fails the scoring gate.
  auto forged = setup.uploads;
  forged[2] = random_fakes(7, forged[2].size());
  auto flagged = verify_ownership(marked, forged, setup.registry, thresholds,
                                  fusion_seed);
  CHECK(flagged.verdict == Verdict::refused);
  CHECK(flagged.scoring_flag);

  // A clean model passes the gates but shows no watermark.
  auto clean = verify_ownership(*base, setup.uploads, setup.registry,
                                thresholds, fusion_seed);
  CHECK(clean.verdict == Verdict::not_owned);
  CHECK(clean.gap > thresholds.eps_gap);

  CHECK(verdict_name(Verdict::owned) == "owned");
  CHECK(verdict_name(Verdict::not_owned) == "not-owned");
  CHECK(verdict_name(Verdict::refused) == "refused");
}

TEST_CASE("collusion success is zero without full cooperation") {
  CollusionConfig config;
  config.n_clients = 10;
  config.base_model = shared_base();

  // No colluders means no submissions at all.
  CHECK(simulate_collusion(AttackKind::stealing, 0.0, 3, 11, config) == 0.0);

  // Partial coalitions fail the authorization or scoring gates.
  double steal_03 = simulate_collusion(AttackKind::stealing, 0.3, 5, 12,
                                       config);
  double fake_03 = simulate_collusion(AttackKind::counterfeiting, 0.3, 5, 12,
                                      config);
  CHECK(steal_03 == 0.0);
  CHECK(fake_03 == 0.0);

  // The full owner set is the only coalition that verifies.
  double steal_10 = simulate_collusion(AttackKind::stealing, 1.0, 3, 13,
                                       config);
  double fake_10 = simulate_collusion(AttackKind::counterfeiting, 1.0, 3, 13,
                                      config);
  CHECK(steal_10 == 1.0);
  CHECK(fake_10 == 1.0);
  CHECK(steal_03 <= steal_10);
  CHECK(fake_03 <= fake_10);

  CHECK_THROWS_AS(simulate_collusion(AttackKind::stealing, 1.5, 1, 1, config),
                  InvalidInputError);
  CHECK_THROWS_AS(simulate_collusion(AttackKind::stealing, 0.5, 0, 1, config),
                  InvalidInputError);
  CollusionConfig empty = config;
  empty.n_clients = 0;
  CHECK_THROWS_AS(simulate_collusion(AttackKind::stealing, 0.5, 1, 1, empty),
                  InvalidInputError);
}
