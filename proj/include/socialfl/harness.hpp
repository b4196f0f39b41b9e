#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "socialfl/coalition.hpp"
#include "socialfl/common.hpp"
#include "socialfl/consensus.hpp"
#include "socialfl/flsim.hpp"
#include "socialfl/provenance.hpp"
#include "socialfl/social_graph.hpp"

namespace socialfl::harness {

// Attack sweep grid for the provenance experiment.
struct AttackGrid {
  std::vector<std::string> kinds = {"stealing", "counterfeiting"};
  std::vector<double> ratios = {0.1, 0.2, 0.3, 0.4};
  std::size_t trials = 200;
  std::size_t n_clients = 100;
};

// Whole-run configuration.  Every field except master_seed has a default;
// the JSON schema is strict (unknown keys are rejected by name).
struct ExperimentConfig {
  std::uint64_t master_seed = 0;  // required in config files
  std::size_t n_avatars = 100;
  double graph_density = 0.3;
  std::size_t max_iterations = 50;  // coalition formation pass budget
  std::size_t rounds = 20;          // consensus heights / FL rounds
  std::size_t n_full = 20;          // full (consensus) nodes
  double byz_fraction = 0.3;        // consensus experiment fault rate
  std::size_t model_dim = 8;        // simulated FL model dimension
  std::size_t n_edges = 4;          // edge aggregators, clusters round-robin
  std::size_t fused_count = 20;     // joint watermark size M
  std::string out_dir = "out";
  std::string graph_file;  // optional: load this graph instead of generating

  graph::TrustParams trust;
  coalition::QualityParams quality;
  flsim::DpParams dp;
  consensus::SortitionParams sortition;
  consensus::ReputationParams reputation;
  provenance::VerifyThresholds verify;
  AttackGrid attacks;
};

ExperimentConfig default_config(std::uint64_t master_seed);

// Strict JSON: unknown key / missing master_seed / out-of-range value throw
// ConfigError naming the offender.  config_to_json emits the canonical form
// (sorted keys, round-trip doubles); the digest hashes exactly those bytes.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
Digest config_digest(const ExperimentConfig& config);

// Shortest round-trip decimal form (std::to_chars); every CSV and JSON
// number the harness emits goes through here or through the JSON dumper so
// reruns are byte-identical.
std::string format_double(double value);

struct CoalitionOutcome {
  coalition::GameTrace trace;
  double noncoop_mean = 0.0;  // all-singleton baseline, constant per config
  double final_mean = 0.0;
};

// Random graph + profile draw + best-response dynamics; writes
// coalition.csv, game_trace.csv, and graph.json (one CSV row per pass).
CoalitionOutcome run_coalition_experiment(
    const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct ConsensusOutcome {
  std::vector<consensus::HeightReport> reports;
  std::size_t safety_violations = 0;
  std::size_t empty_blocks = 0;
  double honest_mean_reputation = 0.0;
  double faulty_mean_reputation = 0.0;  // 0 when no faulty nodes exist
};

// `rounds` heights over n_full nodes with byz_fraction faults; writes
// consensus.csv and consensus_summary.csv.
ConsensusOutcome run_consensus_experiment(
    const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct ProvenanceCell {
  std::string attack;
  double ratio = 0.0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate = 0.0;
};

// Attack-kind x collusion-ratio sweep sharing one base model; writes
// provenance.csv.
std::vector<ProvenanceCell> run_provenance_experiment(
    const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct PipelineOutcome {
  std::size_t blocks = 0;  // appended MA blocks (excludes genesis)
  provenance::Verdict verdict = provenance::Verdict::refused;
  double verify_gap = 0.0;
  Digest chain_tip;
  Digest config_digest;
};

// End-to-end run: coalition formation, per-round FL aggregation posted as
// multi-signed saTx + gaTx, one consensus height per round over an honest
// full-node network, hashchain payment commits, then joint watermark
// embedding with one genuine verification posted as pvTx.  Exports
// chain.jsonl, offchain/, all stage CSVs, graph.json, and manifest.json.
PipelineOutcome run_full_pipeline(const ExperimentConfig& config,
                                  const std::filesystem::path& out_dir);

}  // namespace socialfl::harness
