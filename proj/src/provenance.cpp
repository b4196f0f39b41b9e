#include "socialfl/provenance.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"
#include "socialfl/rng.hpp"

namespace socialfl::provenance {

namespace {

std::vector<double> softmax(std::vector<double> logits) {
  double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : logits) v /= total;
  return logits;
}

std::size_t argmax(const std::vector<double>& values) {
  return static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace

Classifier Classifier::init(const ClassifierConfig& config,
                            std::uint64_t seed) {
  if (config.input_dim < 1 || config.num_classes < 2 ||
      config.feature_width < 1)
    throw InvalidInputError("classifier: invalid dimensions");
  Classifier model;
  model.config_ = config;
  auto stream = derive_stream(seed, "provenance.classifier");
  double scale = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  model.projection_.resize(config.feature_width * config.input_dim);
  for (auto& v : model.projection_) v = stream.gaussian() * scale;
  model.offset_.resize(config.feature_width);
  for (auto& v : model.offset_) v = stream.uniform(-1.0, 1.0);
  model.weights_.assign(config.num_classes * config.feature_width, 0.0);
  return model;
}

std::vector<double> Classifier::feature(std::span<const double> x) const {
  if (x.size() != config_.input_dim)
    throw InvalidInputError("classifier: input dimension mismatch");
  std::vector<double> phi(config_.feature_width);
  for (std::size_t h = 0; h < config_.feature_width; ++h) {
    const double* row = projection_.data() + h * config_.input_dim;
    double acc = offset_[h];
    for (std::size_t f = 0; f < config_.input_dim; ++f) acc += row[f] * x[f];
    phi[h] = std::tanh(acc);
  }
  return phi;
}

std::vector<double> Classifier::logits_from_feature(
    std::span<const double> phi) const {
  std::vector<double> logits(config_.num_classes);
  for (std::size_t c = 0; c < config_.num_classes; ++c) {
    const double* row = weights_.data() + c * config_.feature_width;
    double acc = 0.0;
    for (std::size_t h = 0; h < config_.feature_width; ++h)
      acc += row[h] * phi[h];
    logits[c] = acc;
  }
  return logits;
}

std::vector<double> Classifier::predict_proba(std::span<const double> x) const {
  return softmax(logits_from_feature(feature(x)));
}

std::size_t Classifier::predict(std::span<const double> x) const {
  return argmax(logits_from_feature(feature(x)));
}

void Classifier::set_anchor(std::vector<std::vector<double>> features,
                            std::vector<std::size_t> labels) {
  if (features.size() != labels.size())
    throw InvalidInputError("classifier: anchor features/labels mismatch");
  anchor_features_ = std::move(features);
  anchor_labels_ = std::move(labels);
}

BlobTask BlobTask::make(const ClassifierConfig& config, std::uint64_t seed) {
  auto stream = derive_stream(seed, "provenance.blobs");
  BlobTask task;
  task.means.resize(config.num_classes);
  for (auto& mean : task.means) {
    mean.resize(config.input_dim);
    double norm = 0.0;
    for (auto& v : mean) {
      v = stream.gaussian();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : mean) v *= config.blob_radius / norm;
  }
  return task;
}

Dataset BlobTask::sample(const ClassifierConfig& config, std::size_t per_class,
                         std::uint64_t seed, std::uint64_t tag) const {
  auto stream = derive_stream(seed, "provenance.data", tag);
  Dataset data;
  data.inputs.reserve(per_class * means.size());
  data.labels.reserve(per_class * means.size());
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      std::vector<double> x(config.input_dim);
      for (std::size_t f = 0; f < config.input_dim; ++f)
        x[f] = means[c][f] + stream.gaussian();
      data.inputs.push_back(std::move(x));
      data.labels.push_back(c);
    }
  }
  return data;
}

namespace {

struct TrainBatch {
  std::vector<std::vector<double>> features;  // N x H
  std::vector<std::vector<double>> targets;   // N x L
  std::vector<double> weights;                // N
};

// Full-batch gradient descent on the class weights against weighted
// cross-entropy.  The step size self-tunes: a step that raises the loss is
// rolled back and retried shorter, an accepted step lets the rate recover
// toward its initial value.  One fused pass yields both the gradient and the
// loss, so a rejected trial costs the same as an accepted one.  `stop` is
// evaluated after each accepted step.
void gd_steps(Classifier& model, const TrainBatch& batch, double lr,
              std::size_t max_steps,
              const std::function<bool(const Classifier&)>& stop) {
  std::size_t classes = model.config().num_classes;
  std::size_t width = model.config().feature_width;
  double weight_total = 0.0;
  for (double w : batch.weights) weight_total += w;
  if (batch.features.empty() || weight_total <= 0.0) return;

  auto& weights = model.class_weights_mutable();
  std::vector<double> grad(classes * width);
  auto grad_and_loss = [&]() {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t n = 0; n < batch.features.size(); ++n) {
      const auto& phi = batch.features[n];
      auto p = softmax(model.logits_from_feature(phi));
      double w = batch.weights[n];
      double sample = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        double y = batch.targets[n][c];
        if (y > 0.0) sample -= y * std::log(std::max(p[c], 1e-300));
        double coef = w * (p[c] - y);
        if (coef == 0.0) continue;
        double* row = grad.data() + c * width;
        for (std::size_t h = 0; h < width; ++h) row[h] += coef * phi[h];
      }
      loss += w * sample;
    }
    return loss / weight_total;
  };

  const double lr_cap = lr;
  std::vector<double> best_weights = weights;
  double best_loss = grad_and_loss();
  std::vector<double> best_grad = grad;

  for (std::size_t step = 0; step < max_steps; ++step) {
    double scale = lr / weight_total;
    for (std::size_t i = 0; i < weights.size(); ++i)
      weights[i] = best_weights[i] - scale * best_grad[i];
    double loss = grad_and_loss();
    if (loss <= best_loss) {
      best_loss = loss;
      best_weights = weights;
      std::swap(best_grad, grad);
      lr = std::min(lr * 1.25, lr_cap);
      if (stop && stop(model)) return;
    } else {
      lr *= 0.5;
      if (lr <= 0.0) break;
    }
  }
  weights = best_weights;
}

std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  std::vector<double> y(classes, 0.0);
  y.at(label) = 1.0;
  return y;
}

double accuracy_on_features(const Classifier& model,
                            const std::vector<std::vector<double>>& features,
                            const std::vector<std::size_t>& labels) {
  if (features.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < features.size(); ++n)
    if (argmax(model.logits_from_feature(features[n])) == labels[n]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(features.size());
}

double gap_on_features(const Classifier& model,
                       const std::vector<std::vector<double>>& features,
                       const std::vector<std::vector<double>>& soft_labels) {
  if (features.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    auto p = softmax(model.logits_from_feature(features[n]));
    double l1 = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c)
      l1 += std::abs(p[c] - soft_labels[n][c]);
    total += l1;
  }
  return total / static_cast<double>(features.size());
}

}  // namespace

void train_main_task(Classifier& model, const Dataset& train,
                     std::size_t steps, double lr) {
  if (train.size() == 0)
    throw InvalidInputError("train_main_task: empty training set");
  TrainBatch batch;
  batch.features.reserve(train.size());
  for (const auto& x : train.inputs) batch.features.push_back(model.feature(x));
  for (std::size_t label : train.labels)
    batch.targets.push_back(one_hot(label, model.config().num_classes));
  batch.weights.assign(train.size(), 1.0);
  gd_steps(model, batch, lr, steps, nullptr);
  model.set_anchor(batch.features, train.labels);
  model.set_trained(true);
}

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < data.size(); ++n)
    if (model.predict(data.inputs[n]) == data.labels[n]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

PrivateWatermark gen_private_watermark(ClientId client, std::uint64_t seed,
                                       const WatermarkConfig& config) {
  if (config.samples < 1 || config.upload_count < 1 ||
      config.upload_count > config.samples)
    throw InvalidInputError("watermark: invalid sample/upload sizes");
  auto stream = derive_stream(seed, "provenance.wm", client);
  PrivateWatermark wm;
  wm.owner = client;
  wm.samples.reserve(config.samples);
  for (std::size_t i = 0; i < config.samples; ++i) {
    TriggerSample sample;
    sample.input.resize(config.input_dim);
    for (auto& v : sample.input) v = stream.uniform(-1.0, 1.0);
    sample.hard_label = stream.uniform_index(config.num_classes);
    wm.samples.push_back(std::move(sample));
  }
  std::vector<std::size_t> order(config.samples);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < config.upload_count; ++i) {
    std::size_t j = i + stream.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  wm.upload_subset.assign(order.begin(),
                          order.begin() +
                              static_cast<std::ptrdiff_t>(config.upload_count));
  std::sort(wm.upload_subset.begin(), wm.upload_subset.end());
  return wm;
}

double trigger_accuracy(const Classifier& model,
                        const std::vector<TriggerSample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples)
    if (model.predict(s.input) == s.hard_label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Classifier embed_watermark(const Classifier& model,
                           const std::vector<TriggerSample>& samples,
                           std::size_t max_steps) {
  Classifier out = model;
  if (samples.empty()) return out;

  TrainBatch batch;
  std::vector<std::vector<double>> trigger_features;
  std::vector<std::size_t> trigger_labels;
  for (const auto& s : samples) {
    trigger_features.push_back(model.feature(s.input));
    trigger_labels.push_back(s.hard_label);
  }
  for (std::size_t n = 0; n < trigger_features.size(); ++n) {
    batch.features.push_back(trigger_features[n]);
    batch.targets.push_back(
        one_hot(trigger_labels[n], model.config().num_classes));
    batch.weights.push_back(model.config().trigger_weight);
  }
  // Replay the main-task anchor so the trigger fit does not erase it.
  for (std::size_t n = 0; n < model.anchor_features().size(); ++n) {
    batch.features.push_back(model.anchor_features()[n]);
    batch.targets.push_back(
        one_hot(model.anchor_labels()[n], model.config().num_classes));
    batch.weights.push_back(1.0);
  }

  constexpr double kTargetAccuracy = 0.95;
  gd_steps(out, batch, model.config().embed_lr, max_steps,
           [&](const Classifier& m) {
             return accuracy_on_features(m, trigger_features, trigger_labels) >=
                    kTargetAccuracy;
           });
  double achieved = accuracy_on_features(out, trigger_features, trigger_labels);
  if (achieved < kTargetAccuracy)
    throw EmbeddingFailedError(
        "watermark embedding did not reach target trigger accuracy", achieved);
  return out;
}

WatermarkRegistry::WatermarkRegistry(std::vector<ClientId> expected_clients)
    : expected_(std::move(expected_clients)) {
  std::sort(expected_.begin(), expected_.end());
  if (std::adjacent_find(expected_.begin(), expected_.end()) !=
      expected_.end())
    throw InvalidInputError("registry: duplicate expected client");
  if (expected_.empty())
    throw InvalidInputError("registry: expected client list is empty");
}

void WatermarkRegistry::register_upload(ClientId client,
                                        std::vector<TriggerSample> upload) {
  if (sealed_)
    throw InvalidInputError("registry: sealed, no further uploads");
  if (!std::binary_search(expected_.begin(), expected_.end(), client))
    throw UnknownClientError("registry: client " + std::to_string(client) +
                             " is not a task participant");
  if (uploads_.contains(client))
    throw InvalidInputError("registry: client " + std::to_string(client) +
                            " already registered (write-once)");
  if (upload.empty())
    throw InvalidInputError("registry: empty upload");
  uploads_[client] = std::move(upload);
}

void WatermarkRegistry::seal() {
  for (ClientId c : expected_)
    if (!uploads_.contains(c))
      throw IncompleteRegistryError("registry: client " + std::to_string(c) +
                                    " has not registered");
  sealed_ = true;
}

const std::vector<TriggerSample>& WatermarkRegistry::samples_of(
    ClientId client) const {
  auto it = uploads_.find(client);
  if (it == uploads_.end())
    throw UnknownClientError("registry: no upload for client " +
                             std::to_string(client));
  return it->second;
}

JointWatermark fuse_joint(const WatermarkRegistry& registry,
                          std::uint64_t seed, std::size_t fused_count,
                          std::size_t num_classes) {
  if (!registry.sealed())
    throw IncompleteRegistryError("fuse_joint: registry is not sealed");
  for (ClientId c : registry.expected_clients())
    if (!registry.has(c))
      throw IncompleteRegistryError("fuse_joint: client " + std::to_string(c) +
                                    " missing from registry");
  const auto& clients = registry.expected_clients();
  JointWatermark joint;
  joint.fused_samples.reserve(fused_count);
  for (std::size_t m = 0; m < fused_count; ++m) {
    auto stream = derive_stream(seed, "provenance.fuse", m);
    std::vector<const TriggerSample*> picks;
    std::vector<double> weights;
    picks.reserve(clients.size());
    double weight_total = 0.0;
    for (ClientId c : clients) {
      const auto& samples = registry.samples_of(c);
      picks.push_back(&samples[stream.uniform_index(samples.size())]);
      // Normalized unit-exponential draws = symmetric Dirichlet weights.
      double w = -std::log(1.0 - stream.uniform());
      weights.push_back(w);
      weight_total += w;
    }
    FusedSample fused;
    fused.input.assign(picks.front()->input.size(), 0.0);
    fused.soft_label.assign(num_classes, 0.0);
    for (std::size_t i = 0; i < picks.size(); ++i) {
      double w = weights[i] / weight_total;
      for (std::size_t f = 0; f < fused.input.size(); ++f)
        fused.input[f] += w * picks[i]->input[f];
      fused.soft_label.at(picks[i]->hard_label) +=
          1.0 / static_cast<double>(clients.size());
    }
    joint.fused_samples.push_back(std::move(fused));
  }
  return joint;
}

double mean_l1_gap(const Classifier& model, const JointWatermark& joint) {
  if (joint.fused_samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& fused : joint.fused_samples) {
    auto p = model.predict_proba(fused.input);
    double l1 = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c)
      l1 += std::abs(p[c] - fused.soft_label[c]);
    total += l1;
  }
  return total / static_cast<double>(joint.fused_samples.size());
}

Classifier embed_joint(const Classifier& global_model,
                       const JointWatermark& joint, std::size_t max_steps,
                       double gap_target) {
  Classifier out = global_model;
  if (joint.fused_samples.empty()) return out;

  TrainBatch batch;
  std::vector<std::vector<double>> fused_features;
  std::vector<std::vector<double>> soft_labels;
  for (const auto& fused : joint.fused_samples) {
    fused_features.push_back(global_model.feature(fused.input));
    soft_labels.push_back(fused.soft_label);
  }
  for (std::size_t n = 0; n < fused_features.size(); ++n) {
    batch.features.push_back(fused_features[n]);
    batch.targets.push_back(soft_labels[n]);
    batch.weights.push_back(global_model.config().joint_weight);
  }
  // Stratified slice of the replay anchor keeps the main task in place.
  std::size_t classes = global_model.config().num_classes;
  std::size_t per_class =
      std::max<std::size_t>(1, global_model.config().joint_anchor_size / classes);
  std::vector<std::size_t> taken(classes, 0);
  for (std::size_t n = 0; n < global_model.anchor_features().size(); ++n) {
    std::size_t label = global_model.anchor_labels()[n];
    if (taken[label] >= per_class) continue;
    ++taken[label];
    batch.features.push_back(global_model.anchor_features()[n]);
    batch.targets.push_back(one_hot(label, classes));
    batch.weights.push_back(1.0);
  }

  gd_steps(out, batch, global_model.config().embed_lr, max_steps,
           [&](const Classifier& m) {
             return gap_on_features(m, fused_features, soft_labels) <
                    gap_target;
           });
  double achieved = gap_on_features(out, fused_features, soft_labels);
  if (!(achieved < gap_target))
    throw EmbeddingFailedError(
        "joint embedding did not reach the target output gap", achieved);
  return out;
}

namespace {

std::vector<double> normalized_copy(const std::vector<double>& x) {
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  if (norm <= 0.0) return std::vector<double>(x.size(), 0.0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / norm;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

ScoreReport score_submissions(
    const WatermarkRegistry& registry,
    const std::map<ClientId, std::vector<TriggerSample>>& submissions,
    const VerifyThresholds& thresholds) {
  ScoreReport report;

  // Per-client similarity via greedy best-pair cosine matching.
  for (const auto& [client, submitted] : submissions) {
    const auto& registered = registry.samples_of(client);  // unknown -> throw
    std::vector<std::vector<double>> reg_norm, sub_norm;
    for (const auto& s : registered) reg_norm.push_back(normalized_copy(s.input));
    for (const auto& s : submitted) sub_norm.push_back(normalized_copy(s.input));

    std::vector<std::vector<double>> cos(reg_norm.size());
    for (std::size_t r = 0; r < reg_norm.size(); ++r) {
      cos[r].resize(sub_norm.size());
      for (std::size_t s = 0; s < sub_norm.size(); ++s)
        cos[r][s] = dot(reg_norm[r], sub_norm[s]);
    }
    std::vector<bool> used_r(reg_norm.size(), false);
    std::vector<bool> used_s(sub_norm.size(), false);
    std::size_t pairs = std::min(reg_norm.size(), sub_norm.size());
    double matched = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
      double best = -2.0;
      std::size_t br = 0, bs = 0;
      for (std::size_t r = 0; r < reg_norm.size(); ++r) {
        if (used_r[r]) continue;
        for (std::size_t s = 0; s < sub_norm.size(); ++s) {
          if (used_s[s]) continue;
          if (cos[r][s] > best) {
            best = cos[r][s];
            br = r;
            bs = s;
          }
        }
      }
      used_r[br] = used_s[bs] = true;
      matched += best;
    }
    double score = registered.empty()
                       ? 0.0
                       : matched / static_cast<double>(registered.size());
    report.scores[client] = score;
    if (score < thresholds.s_min) report.collusion_flag = true;
  }

  // Cross-client diversity floor on normalized inputs: distance < delta_div
  // is equivalently cosine > 1 - delta_div^2 / 2.
  if (!report.collusion_flag) {
    double cos_ceiling = 1.0 - thresholds.delta_div * thresholds.delta_div / 2.0;
    std::vector<std::pair<ClientId, std::vector<double>>> all;
    for (const auto& [client, submitted] : submissions)
      for (const auto& s : submitted)
        all.emplace_back(client, normalized_copy(s.input));
    for (std::size_t i = 0; i < all.size() && !report.collusion_flag; ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        if (all[i].first == all[j].first) continue;
        if (dot(all[i].second, all[j].second) > cos_ceiling) {
          report.collusion_flag = true;
          break;
        }
      }
    }
  }
  return report;
}

std::string verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::owned: return "owned";
    case Verdict::not_owned: return "not-owned";
    case Verdict::refused: return "refused";
  }
  return "?";
}

namespace {

VerifyRecord finish_record(VerifyRecord record, std::uint64_t fusion_seed,
                           const VerifyThresholds& thresholds,
                           const std::vector<ClientId>& clients) {
  ByteWriter w;
  w.put_string("provenance.record");
  w.put_u8(static_cast<std::uint8_t>(record.verdict));
  w.put_f64(record.gap);
  w.put_u8(record.scoring_flag ? 1 : 0);
  w.put_u32(static_cast<std::uint32_t>(record.missing_clients.size()));
  for (ClientId c : record.missing_clients) w.put_u32(c);
  w.put_u32(static_cast<std::uint32_t>(clients.size()));
  for (ClientId c : clients) w.put_u32(c);
  w.put_u64(fusion_seed);
  w.put_f64(thresholds.s_min);
  w.put_f64(thresholds.delta_div);
  w.put_f64(thresholds.eps_gap);
  record.record_bytes = w.take();
  record.record_digest = sha256(record.record_bytes);
  return record;
}

}  // namespace

VerifyRecord verify_ownership(
    const Classifier& suspect,
    const std::map<ClientId, std::vector<TriggerSample>>& submissions,
    const WatermarkRegistry& registry, const VerifyThresholds& thresholds,
    std::uint64_t fusion_seed, std::size_t fused_count) {
  VerifyRecord record;
  const auto& clients = registry.expected_clients();

  // All-owner approval is absolute: every registered client must submit.
  for (ClientId c : clients)
    if (!submissions.contains(c)) record.missing_clients.push_back(c);
  if (!record.missing_clients.empty()) {
    record.verdict = Verdict::refused;
    return finish_record(std::move(record), fusion_seed, thresholds, clients);
  }

  auto report = score_submissions(registry, submissions, thresholds);
  if (report.collusion_flag) {
    record.verdict = Verdict::refused;
    record.scoring_flag = true;
    return finish_record(std::move(record), fusion_seed, thresholds, clients);
  }

  auto joint = fuse_joint(registry, fusion_seed, fused_count,
                          suspect.config().num_classes);
  record.gap = mean_l1_gap(suspect, joint);
  record.verdict =
      record.gap < thresholds.eps_gap ? Verdict::owned : Verdict::not_owned;
  return finish_record(std::move(record), fusion_seed, thresholds, clients);
}

std::shared_ptr<const Classifier> make_base_model(const ClassifierConfig& cfg,
                                                  std::uint64_t seed) {
  BlobTask task = BlobTask::make(cfg, seed);
  Dataset train = task.sample(cfg, cfg.train_per_class, seed, 0);
  auto model = std::make_shared<Classifier>(Classifier::init(cfg, seed));
  train_main_task(*model, train, cfg.base_steps, cfg.base_lr);
  return model;
}

double simulate_collusion(AttackKind attack, double ratio, std::size_t trials,
                          std::uint64_t seed, const CollusionConfig& config) {
  if (ratio < 0.0 || ratio > 1.0)
    throw InvalidInputError("simulate_collusion: ratio must be in [0,1]");
  if (trials < 1)
    throw InvalidInputError("simulate_collusion: trials must be >= 1");
  if (config.n_clients < 1)
    throw InvalidInputError("simulate_collusion: need at least one client");

  std::shared_ptr<const Classifier> base = config.base_model;
  if (!base) base = make_base_model(config.classifier, config.base_model_seed);

  auto colluder_count = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(config.n_clients)));
  std::size_t successes = 0;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::uint64_t trial_seed = derive_seed(seed, "provenance.trial", trial);
    std::uint64_t fusion_seed = derive_seed(trial_seed, "provenance.fusion");

    std::vector<ClientId> clients(config.n_clients);
    for (std::size_t i = 0; i < clients.size(); ++i)
      clients[i] = static_cast<ClientId>(i);
    WatermarkRegistry registry(clients);
    std::map<ClientId, std::vector<TriggerSample>> registered;
    for (ClientId c : clients) {
      auto wm = gen_private_watermark(c, trial_seed, config.watermark);
      std::vector<TriggerSample> upload;
      for (std::size_t idx : wm.upload_subset) upload.push_back(wm.samples[idx]);
      registered[c] = upload;
      registry.register_upload(c, std::move(upload));
    }
    registry.seal();

    auto stream = derive_stream(trial_seed, "provenance.colluders");
    std::vector<ClientId> order = clients;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::size_t j = i + stream.uniform_index(order.size() - i);
      std::swap(order[i], order[j]);
    }
    std::set<ClientId> colluders(order.begin(),
                                 order.begin() +
                                     static_cast<std::ptrdiff_t>(colluder_count));

    std::map<ClientId, std::vector<TriggerSample>> submissions;
    if (!colluders.empty()) {
      std::optional<JointWatermark> observed;
      if (attack == AttackKind::stealing)
        observed = fuse_joint(registry, fusion_seed,
                              config.fused_count,
                              config.watermark.num_classes);
      std::size_t victim_index = 0;
      for (ClientId c : clients) {
        if (colluders.contains(c)) {
          submissions[c] = registered[c];
          continue;
        }
        std::vector<TriggerSample> forged;
        auto forge_stream =
            derive_stream(trial_seed, "provenance.forge", c);
        for (std::size_t k = 0; k < config.watermark.upload_count; ++k) {
          TriggerSample s;
          if (attack == AttackKind::stealing) {
            const auto& fused = observed->fused_samples
                [(victim_index + k) % observed->fused_samples.size()];
            s.input = fused.input;
            for (auto& v : s.input) v += forge_stream.gaussian(0.0, 0.05);
          } else {
            s.input.resize(config.watermark.input_dim);
            for (auto& v : s.input) v = forge_stream.uniform(-1.0, 1.0);
          }
          s.hard_label = forge_stream.uniform_index(
              config.watermark.num_classes);
          forged.push_back(std::move(s));
        }
        submissions[c] = std::move(forged);
        ++victim_index;
      }
    }

    // Cheap gate first: authorization and scoring need no model, and the
    // joint-embedded suspect only has to be materialized if both pass.
    bool complete = submissions.size() == clients.size();
    bool gate_ok = complete;
    if (complete) {
      auto report = score_submissions(registry, submissions, config.thresholds);
      gate_ok = !report.collusion_flag;
    }
    if (!gate_ok) continue;

    try {
      auto joint = fuse_joint(registry, fusion_seed, config.fused_count,
                              config.watermark.num_classes);
      Classifier suspect =
          embed_joint(*base, joint, config.classifier.embed_max_steps,
                      config.thresholds.eps_gap / 2.0);
      auto record = verify_ownership(suspect, submissions, registry,
                                     config.thresholds, fusion_seed,
                                     config.fused_count);
      if (record.verdict == Verdict::owned) ++successes;
    } catch (const EmbeddingFailedError&) {
      // A failed embedding leaves no model to claim; the trial fails.
    }
  }
  return static_cast<double>(successes) / static_cast<double>(trials);
}

}  // namespace socialfl::provenance
