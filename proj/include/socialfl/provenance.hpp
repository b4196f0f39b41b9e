#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "socialfl/common.hpp"

namespace socialfl::provenance {

using ClientId = std::uint32_t;

struct ClassifierConfig {
  std::size_t input_dim = 32;      // F
  std::size_t num_classes = 10;    // L
  std::size_t feature_width = 512; // random tanh features
  double blob_radius = 8.0;        // class-mean radius of the synthetic task
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 50;
  std::size_t base_steps = 600;
  double base_lr = 1.0;
  double embed_lr = 0.3;
  double trigger_weight = 3.0;  // per-trigger loss weight vs replay anchor
  double joint_weight = 10.0;   // per-fused-sample loss weight
  std::size_t joint_anchor_size = 60;
  std::size_t embed_max_steps = 4000;
};

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return inputs.size(); }
};

// Linear softmax over a frozen, seeded random tanh feature map
// phi(x) = tanh(A x + c); only the class weights W train.  The model keeps a
// replay anchor (a slice of its training data) so later watermark embedding
// can preserve the main task.
class Classifier {
 public:
  static Classifier init(const ClassifierConfig& config, std::uint64_t seed);

  std::vector<double> feature(std::span<const double> x) const;
  std::vector<double> logits_from_feature(std::span<const double> phi) const;
  std::vector<double> predict_proba(std::span<const double> x) const;
  std::size_t predict(std::span<const double> x) const;

  bool trained() const { return trained_; }
  const ClassifierConfig& config() const { return config_; }

  const std::vector<double>& class_weights() const { return weights_; }
  std::vector<double>& class_weights_mutable() { return weights_; }
  void set_trained(bool t) { trained_ = t; }

  const std::vector<std::vector<double>>& anchor_features() const {
    return anchor_features_;
  }
  const std::vector<std::size_t>& anchor_labels() const {
    return anchor_labels_;
  }
  void set_anchor(std::vector<std::vector<double>> features,
                  std::vector<std::size_t> labels);

 private:
  ClassifierConfig config_;
  std::vector<double> projection_;  // feature_width x input_dim, row-major
  std::vector<double> offset_;      // feature_width
  std::vector<double> weights_;     // num_classes x feature_width, row-major
  std::vector<std::vector<double>> anchor_features_;
  std::vector<std::size_t> anchor_labels_;
  bool trained_ = false;
};

// Ten Gaussian blobs: unit-noise classes centered on radius-scaled random
// directions.
struct BlobTask {
  std::vector<std::vector<double>> means;  // num_classes x input_dim

  static BlobTask make(const ClassifierConfig& config, std::uint64_t seed);
  Dataset sample(const ClassifierConfig& config, std::size_t per_class,
                 std::uint64_t seed, std::uint64_t tag) const;
};

// Full-batch softmax-CE gradient descent on the class weights; stores the
// training set (as features) into the model's replay anchor.
void train_main_task(Classifier& model, const Dataset& train,
                     std::size_t steps, double lr);

double accuracy(const Classifier& model, const Dataset& data);

struct TriggerSample {
  std::vector<double> input;    // in [-1,1]^F
  std::size_t hard_label = 0;   // deliberately wrong by construction
};

struct WatermarkConfig {
  std::size_t samples = 100;
  std::size_t upload_count = 10;
  std::size_t input_dim = 32;
  std::size_t num_classes = 10;
};

struct PrivateWatermark {
  ClientId owner = 0;
  std::vector<TriggerSample> samples;
  std::vector<std::size_t> upload_subset;  // ascending indices into samples
};

PrivateWatermark gen_private_watermark(ClientId client, std::uint64_t seed,
                                       const WatermarkConfig& config);

double trigger_accuracy(const Classifier& model,
                        const std::vector<TriggerSample>& samples);

// Fine-tunes a copy on the trigger samples (weighted against the model's
// replay anchor) until trigger accuracy >= 0.95; throws EmbeddingFailedError
// carrying the achieved accuracy on non-convergence.
Classifier embed_watermark(const Classifier& model,
                           const std::vector<TriggerSample>& samples,
                           std::size_t max_steps);

struct FusedSample {
  std::vector<double> input;
  std::vector<double> soft_label;  // probability vector over classes
};

struct JointWatermark {
  std::vector<FusedSample> fused_samples;
};

struct VerifyThresholds {
  double s_min = 0.95;     // per-client similarity floor
  double delta_div = 0.1;  // cross-client minimum distance (normalized)
  double eps_gap = 0.3;    // output-vs-soft-label L1 gap ceiling
};

struct ScoreReport {
  std::map<ClientId, double> scores;
  bool collusion_flag = false;
};

class WatermarkRegistry;

JointWatermark fuse_joint(const WatermarkRegistry& registry,
                          std::uint64_t seed, std::size_t fused_count,
                          std::size_t num_classes);
ScoreReport score_submissions(
    const WatermarkRegistry& registry,
    const std::map<ClientId, std::vector<TriggerSample>>& submissions,
    const VerifyThresholds& thresholds);

// Sealed write-once map client -> registered upload; the samples themselves
// are reachable only through the fusion and scoring operations.
class WatermarkRegistry {
 public:
  explicit WatermarkRegistry(std::vector<ClientId> expected_clients);

  void register_upload(ClientId client, std::vector<TriggerSample> upload);
  void seal();

  bool sealed() const { return sealed_; }
  bool has(ClientId client) const { return uploads_.contains(client); }
  const std::vector<ClientId>& expected_clients() const { return expected_; }

 private:
  friend JointWatermark fuse_joint(const WatermarkRegistry& registry,
                                   std::uint64_t seed, std::size_t fused_count,
                                   std::size_t num_classes);
  friend ScoreReport score_submissions(
      const WatermarkRegistry& registry,
      const std::map<ClientId, std::vector<TriggerSample>>& submissions,
      const VerifyThresholds& thresholds);

  const std::vector<TriggerSample>& samples_of(ClientId client) const;

  std::vector<ClientId> expected_;  // ascending
  std::map<ClientId, std::vector<TriggerSample>> uploads_;
  bool sealed_ = false;
};

// fuse_joint (declared above): convex mixup of one registered sample per
// client under seeded symmetric weights; soft label = normalized histogram
// of the constituent hard labels.

// Fine-tunes against the soft labels until the mean L1 gap over the joint
// set falls below gap_target; throws EmbeddingFailedError otherwise.
Classifier embed_joint(const Classifier& global_model,
                       const JointWatermark& joint, std::size_t max_steps,
                       double gap_target);

double mean_l1_gap(const Classifier& model, const JointWatermark& joint);

// score_submissions (declared above): score_i = greedily matched mean
// cosine similarity between client i's submitted and registered inputs; the
// flag trips when any score falls below s_min or any cross-client
// submission pair lies closer than delta_div after normalization.

enum class Verdict { owned, not_owned, refused };

std::string verdict_name(Verdict verdict);

struct VerifyRecord {
  Verdict verdict = Verdict::refused;
  double gap = 0.0;
  bool scoring_flag = false;
  std::vector<ClientId> missing_clients;
  std::vector<std::uint8_t> record_bytes;  // canonical, ledger-ready
  Digest record_digest;
};

// All-owner approval, scoring gate, then the soft-label gap test against a
// freshly regenerated joint watermark (same fusion seed as training time).
VerifyRecord verify_ownership(
    const Classifier& suspect,
    const std::map<ClientId, std::vector<TriggerSample>>& submissions,
    const WatermarkRegistry& registry, const VerifyThresholds& thresholds,
    std::uint64_t fusion_seed, std::size_t fused_count = 20);

enum class AttackKind { stealing, counterfeiting };

struct CollusionConfig {
  std::size_t n_clients = 100;
  WatermarkConfig watermark;
  VerifyThresholds thresholds;
  ClassifierConfig classifier;
  std::size_t fused_count = 20;
  std::uint64_t base_model_seed = 0;
  // Shared across cells so the experiment trains the base model once.
  std::shared_ptr<const Classifier> base_model;
};

// Per trial: fresh registry; colluders submit their own registered
// watermarks plus forged submissions for every non-colluder (guesses
// reconstructed from fused observations when stealing, fresh random fakes
// when counterfeiting); success = verdict owned against the joint-embedded
// model.  Returns successes / trials.
double simulate_collusion(AttackKind attack, double ratio, std::size_t trials,
                          std::uint64_t seed, const CollusionConfig& config);

// Trains (or reuses) the shared base model for a collusion/verification
// experiment.
std::shared_ptr<const Classifier> make_base_model(const ClassifierConfig& cfg,
                                                  std::uint64_t seed);

}  // namespace socialfl::provenance
