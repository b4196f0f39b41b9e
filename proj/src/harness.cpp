#include "socialfl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"
#include "socialfl/rng.hpp"

namespace socialfl::harness {

using nlohmann::json;

std::string format_double(double value) {
  std::array<char, 40> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{})
    throw InvalidInputError("format_double: value not representable");
  return std::string(buf.data(), ptr);
}

ExperimentConfig default_config(std::uint64_t master_seed) {
  ExperimentConfig cfg;
  cfg.master_seed = master_seed;
  return cfg;
}

namespace {

std::string dp_mode_name(flsim::DpMode mode) {
  return mode == flsim::DpMode::solo ? "solo" : "cluster";
}

flsim::DpMode dp_mode_from_name(const std::string& name) {
  if (name == "solo") return flsim::DpMode::solo;
  if (name == "cluster") return flsim::DpMode::cluster;
  throw ConfigError("config field dp.mode must be \"solo\" or \"cluster\", got \"" +
                    name + "\"");
}

provenance::AttackKind attack_from_name(const std::string& name) {
  if (name == "stealing") return provenance::AttackKind::stealing;
  if (name == "counterfeiting") return provenance::AttackKind::counterfeiting;
  throw ConfigError("unknown attack kind \"" + name +
                    "\" (expected \"stealing\" or \"counterfeiting\")");
}

void check_keys(const json& obj, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown config key: " + scope + it.key());
  }
}

const json& expect_object(const json& obj, const char* key,
                          const std::string& scope) {
  const json& v = obj.at(key);
  if (!v.is_object())
    throw ConfigError("config field " + scope + key + " must be an object");
  return v;
}

void get_num(const json& obj, const char* key, const std::string& scope,
             double& field) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number())
    throw ConfigError("config field " + scope + key + " must be a number");
  field = v.get<double>();
}

void get_size(const json& obj, const char* key, const std::string& scope,
              std::size_t& field) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError("config field " + scope + key +
                      " must be a non-negative integer");
  field = v.get<std::size_t>();
}

void get_str(const json& obj, const char* key, const std::string& scope,
             std::string& field) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string())
    throw ConfigError("config field " + scope + key + " must be a string");
  field = v.get<std::string>();
}

void require_range(bool ok, const std::string& field, const char* constraint) {
  if (!ok)
    throw ConfigError("config field " + field + " " + constraint);
}

void validate_config(const ExperimentConfig& cfg) {
  require_range(cfg.n_avatars >= 1, "n_avatars", "must be >= 1");
  require_range(cfg.graph_density >= 0.0 && cfg.graph_density <= 1.0,
                "graph_density", "must be in [0,1]");
  require_range(cfg.max_iterations >= 1, "max_iterations", "must be >= 1");
  require_range(cfg.rounds >= 1, "rounds", "must be >= 1");
  require_range(cfg.n_full >= 1, "n_full", "must be >= 1");
  require_range(cfg.byz_fraction >= 0.0 && cfg.byz_fraction <= 1.0,
                "byz_fraction", "must be in [0,1]");
  require_range(cfg.model_dim >= 1, "model_dim", "must be >= 1");
  require_range(cfg.n_edges >= 1, "n_edges", "must be >= 1");
  require_range(cfg.fused_count >= 1, "fused_count", "must be >= 1");
  require_range(!cfg.out_dir.empty(), "out_dir", "must be non-empty");
  require_range(cfg.trust.lambda_decay >= 0.0, "trust.lambda_decay",
                "must be >= 0");
  require_range(cfg.trust.tau_duration > 0.0, "trust.tau_duration",
                "must be > 0");
  require_range(cfg.trust.alpha_mix >= 0.0 && cfg.trust.alpha_mix <= 1.0,
                "trust.alpha_mix", "must be in [0,1]");
  require_range(cfg.trust.theta_trust >= 0.0 && cfg.trust.theta_trust <= 1.0,
                "trust.theta_trust", "must be in [0,1]");
  require_range(cfg.quality.u_max > 0.0, "quality.u_max", "must be > 0");
  require_range(cfg.quality.kappa > 0.0, "quality.kappa", "must be > 0");
  require_range(cfg.quality.beta >= 0.0, "quality.beta", "must be >= 0");
  require_range(cfg.quality.sigma_dp >= 0.0, "quality.sigma_dp",
                "must be >= 0");
  require_range(cfg.quality.cost_per_member >= 0.0, "quality.cost_per_member",
                "must be >= 0");
  require_range(cfg.dp.sigma >= 0.0, "dp.sigma", "must be >= 0");
  require_range(cfg.sortition.expected_committee > 0.0,
                "sortition.expected_committee", "must be > 0");
  require_range(cfg.sortition.quorum_fraction > 0.5 &&
                    cfg.sortition.quorum_fraction <= 1.0,
                "sortition.quorum_fraction", "must be in (0.5,1]");
  require_range(cfg.sortition.max_retry_pairs >= 1,
                "sortition.max_retry_pairs", "must be >= 1");
  require_range(cfg.reputation.delta1 >= 0.0, "reputation.delta1",
                "must be >= 0");
  require_range(cfg.reputation.delta2 >= 0.0, "reputation.delta2",
                "must be >= 0");
  require_range(cfg.reputation.r0 > 0.0 && cfg.reputation.r0 <= 1.0,
                "reputation.r0", "must be in (0,1]");
  require_range(cfg.verify.s_min >= 0.0 && cfg.verify.s_min <= 1.0,
                "verify.s_min", "must be in [0,1]");
  require_range(cfg.verify.delta_div >= 0.0, "verify.delta_div",
                "must be >= 0");
  require_range(cfg.verify.eps_gap > 0.0, "verify.eps_gap", "must be > 0");
  require_range(!cfg.attacks.kinds.empty(), "attacks.kinds",
                "must list at least one attack");
  for (const auto& kind : cfg.attacks.kinds) attack_from_name(kind);
  require_range(!cfg.attacks.ratios.empty(), "attacks.ratios",
                "must list at least one ratio");
  for (double r : cfg.attacks.ratios)
    require_range(r >= 0.0 && r <= 1.0, "attacks.ratios",
                  "entries must be in [0,1]");
  require_range(cfg.attacks.trials >= 1, "attacks.trials", "must be >= 1");
  require_range(cfg.attacks.n_clients >= 1, "attacks.n_clients",
                "must be >= 1");
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(j, "",
             {"master_seed", "n_avatars", "graph_density", "max_iterations",
              "rounds", "n_full", "byz_fraction", "model_dim", "n_edges",
              "fused_count", "out_dir", "graph_file", "trust", "quality",
              "dp", "sortition", "reputation", "verify", "attacks"});
  if (!j.contains("master_seed"))
    throw ConfigError("missing required config field: master_seed");
  if (!j.at("master_seed").is_number_unsigned())
    throw ConfigError(
        "config field master_seed must be a non-negative integer");

  ExperimentConfig cfg;
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  get_size(j, "n_avatars", "", cfg.n_avatars);
  get_num(j, "graph_density", "", cfg.graph_density);
  get_size(j, "max_iterations", "", cfg.max_iterations);
  get_size(j, "rounds", "", cfg.rounds);
  get_size(j, "n_full", "", cfg.n_full);
  get_num(j, "byz_fraction", "", cfg.byz_fraction);
  get_size(j, "model_dim", "", cfg.model_dim);
  get_size(j, "n_edges", "", cfg.n_edges);
  get_size(j, "fused_count", "", cfg.fused_count);
  get_str(j, "out_dir", "", cfg.out_dir);
  get_str(j, "graph_file", "", cfg.graph_file);

  if (j.contains("trust")) {
    const json& t = expect_object(j, "trust", "");
    check_keys(t, "trust.",
               {"lambda_decay", "tau_duration", "alpha_mix", "theta_trust"});
    get_num(t, "lambda_decay", "trust.", cfg.trust.lambda_decay);
    get_num(t, "tau_duration", "trust.", cfg.trust.tau_duration);
    get_num(t, "alpha_mix", "trust.", cfg.trust.alpha_mix);
    get_num(t, "theta_trust", "trust.", cfg.trust.theta_trust);
  }
  if (j.contains("quality")) {
    const json& q = expect_object(j, "quality", "");
    check_keys(q, "quality.",
               {"u_max", "kappa", "beta", "sigma_dp", "cost_per_member"});
    get_num(q, "u_max", "quality.", cfg.quality.u_max);
    get_num(q, "kappa", "quality.", cfg.quality.kappa);
    get_num(q, "beta", "quality.", cfg.quality.beta);
    get_num(q, "sigma_dp", "quality.", cfg.quality.sigma_dp);
    get_num(q, "cost_per_member", "quality.", cfg.quality.cost_per_member);
  }
  if (j.contains("dp")) {
    const json& d = expect_object(j, "dp", "");
    check_keys(d, "dp.", {"sigma", "mode"});
    get_num(d, "sigma", "dp.", cfg.dp.sigma);
    std::string mode = dp_mode_name(cfg.dp.mode);
    get_str(d, "mode", "dp.", mode);
    cfg.dp.mode = dp_mode_from_name(mode);
  }
  if (j.contains("sortition")) {
    const json& s = expect_object(j, "sortition", "");
    check_keys(s, "sortition.",
               {"expected_committee", "quorum_fraction", "max_retry_pairs"});
    get_num(s, "expected_committee", "sortition.",
            cfg.sortition.expected_committee);
    get_num(s, "quorum_fraction", "sortition.",
            cfg.sortition.quorum_fraction);
    get_size(s, "max_retry_pairs", "sortition.",
             cfg.sortition.max_retry_pairs);
  }
  if (j.contains("reputation")) {
    const json& r = expect_object(j, "reputation", "");
    check_keys(r, "reputation.", {"delta1", "delta2", "r0"});
    get_num(r, "delta1", "reputation.", cfg.reputation.delta1);
    get_num(r, "delta2", "reputation.", cfg.reputation.delta2);
    get_num(r, "r0", "reputation.", cfg.reputation.r0);
  }
  if (j.contains("verify")) {
    const json& v = expect_object(j, "verify", "");
    check_keys(v, "verify.", {"s_min", "delta_div", "eps_gap"});
    get_num(v, "s_min", "verify.", cfg.verify.s_min);
    get_num(v, "delta_div", "verify.", cfg.verify.delta_div);
    get_num(v, "eps_gap", "verify.", cfg.verify.eps_gap);
  }
  if (j.contains("attacks")) {
    const json& a = expect_object(j, "attacks", "");
    check_keys(a, "attacks.", {"kinds", "ratios", "trials", "n_clients"});
    if (a.contains("kinds")) {
      const json& kinds = a.at("kinds");
      if (!kinds.is_array())
        throw ConfigError("config field attacks.kinds must be an array");
      cfg.attacks.kinds.clear();
      for (const json& k : kinds) {
        if (!k.is_string())
          throw ConfigError("config field attacks.kinds must hold strings");
        cfg.attacks.kinds.push_back(k.get<std::string>());
      }
    }
    if (a.contains("ratios")) {
      const json& ratios = a.at("ratios");
      if (!ratios.is_array())
        throw ConfigError("config field attacks.ratios must be an array");
      cfg.attacks.ratios.clear();
      for (const json& r : ratios) {
        if (!r.is_number())
          throw ConfigError("config field attacks.ratios must hold numbers");
        cfg.attacks.ratios.push_back(r.get<double>());
      }
    }
    get_size(a, "trials", "attacks.", cfg.attacks.trials);
    get_size(a, "n_clients", "attacks.", cfg.attacks.n_clients);
  }
  validate_config(cfg);
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["master_seed"] = cfg.master_seed;
  j["n_avatars"] = cfg.n_avatars;
  j["graph_density"] = cfg.graph_density;
  j["max_iterations"] = cfg.max_iterations;
  j["rounds"] = cfg.rounds;
  j["n_full"] = cfg.n_full;
  j["byz_fraction"] = cfg.byz_fraction;
  j["model_dim"] = cfg.model_dim;
  j["n_edges"] = cfg.n_edges;
  j["fused_count"] = cfg.fused_count;
  j["out_dir"] = cfg.out_dir;
  j["graph_file"] = cfg.graph_file;
  j["trust"] = {{"lambda_decay", cfg.trust.lambda_decay},
                {"tau_duration", cfg.trust.tau_duration},
                {"alpha_mix", cfg.trust.alpha_mix},
                {"theta_trust", cfg.trust.theta_trust}};
  j["quality"] = {{"u_max", cfg.quality.u_max},
                  {"kappa", cfg.quality.kappa},
                  {"beta", cfg.quality.beta},
                  {"sigma_dp", cfg.quality.sigma_dp},
                  {"cost_per_member", cfg.quality.cost_per_member}};
  j["dp"] = {{"sigma", cfg.dp.sigma}, {"mode", dp_mode_name(cfg.dp.mode)}};
  j["sortition"] = {{"expected_committee", cfg.sortition.expected_committee},
                    {"quorum_fraction", cfg.sortition.quorum_fraction},
                    {"max_retry_pairs", cfg.sortition.max_retry_pairs}};
  j["reputation"] = {{"delta1", cfg.reputation.delta1},
                     {"delta2", cfg.reputation.delta2},
                     {"r0", cfg.reputation.r0}};
  j["verify"] = {{"s_min", cfg.verify.s_min},
                 {"delta_div", cfg.verify.delta_div},
                 {"eps_gap", cfg.verify.eps_gap}};
  j["attacks"] = {{"kinds", cfg.attacks.kinds},
                  {"ratios", cfg.attacks.ratios},
                  {"trials", cfg.attacks.trials},
                  {"n_clients", cfg.attacks.n_clients}};
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

Digest config_digest(const ExperimentConfig& cfg) {
  return sha256(config_to_json(cfg));
}

namespace {

// Minimal CSV emitter; all cells arrive pre-formatted.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_)
      throw ConfigError("cannot open output file: " + path.string());
    out_ << header << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ConfigError("cannot open output file: " + path.string());
  out << text;
}

graph::SocialGraph build_graph(const ExperimentConfig& cfg) {
  if (!cfg.graph_file.empty()) {
    std::ifstream in(cfg.graph_file, std::ios::binary);
    if (!in)
      throw ConfigError("cannot read graph file: " + cfg.graph_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    return graph::graph_from_json(buf.str(), cfg.trust);
  }
  return graph::random_graph(cfg.n_avatars, cfg.graph_density,
                             cfg.master_seed);
}

// d_i ~ U[1,10], q_i ~ U[0.5,1], one stream per avatar.
coalition::ProfileMap draw_profiles(const ExperimentConfig& cfg,
                                    const std::vector<graph::AvatarId>& ids) {
  coalition::ProfileMap profiles;
  for (graph::AvatarId id : ids) {
    auto stream = derive_stream(cfg.master_seed, "harness.profile", id);
    coalition::AvatarProfile p;
    p.id = id;
    p.data_size = stream.uniform(1.0, 10.0);
    p.data_quality = stream.uniform(0.5, 1.0);
    profiles[id] = p;
  }
  return profiles;
}

std::vector<std::uint8_t> model_payload(const flsim::ModelVector& model) {
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(model.dim()));
  for (double v : model.values) w.put_f64(v);
  return w.take();
}

std::vector<std::uint8_t> aggregate_payload(
    const flsim::SocialAggregate& agg) {
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(agg.params.dim()));
  for (double v : agg.params.values) w.put_f64(v);
  w.put_f64(agg.contribution);
  w.put_u32(static_cast<std::uint32_t>(agg.members.size()));
  for (auto id : agg.members) w.put_u32(id);
  return w.take();
}

std::string joined_sizes(const std::vector<std::size_t>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(sizes[i]);
  }
  return out;
}

void write_consensus_rows(const std::filesystem::path& dir,
                          const std::vector<consensus::HeightReport>& reports,
                          const ConsensusOutcome& summary) {
  CsvWriter per_height(dir / "consensus.csv",
                       "height,decided,committee_sizes,byz_count,stages_used");
  for (const auto& r : reports)
    per_height.row({std::to_string(r.height),
                    r.decided.is_zero() ? "empty" : to_hex(r.decided),
                    joined_sizes(r.committee_sizes),
                    std::to_string(r.byz_count),
                    std::to_string(r.stages_used)});
  CsvWriter sum(dir / "consensus_summary.csv",
                "heights,safety_violations,empty_blocks,"
                "honest_mean_reputation,faulty_mean_reputation");
  sum.row({std::to_string(reports.size()),
           std::to_string(summary.safety_violations),
           std::to_string(summary.empty_blocks),
           format_double(summary.honest_mean_reputation),
           format_double(summary.faulty_mean_reputation)});
}

ConsensusOutcome summarize_network(
    const std::vector<consensus::HeightReport>& reports,
    const std::vector<consensus::FullNode>& nodes) {
  ConsensusOutcome out;
  out.reports = reports;
  for (const auto& r : reports) {
    if (r.safety_violation) ++out.safety_violations;
    if (r.empty_block) ++out.empty_blocks;
  }
  double honest_sum = 0.0, faulty_sum = 0.0;
  std::size_t honest_n = 0, faulty_n = 0;
  for (const auto& node : nodes) {
    if (node.profile == consensus::ByzantineProfile::honest) {
      honest_sum += node.reputation;
      ++honest_n;
    } else {
      faulty_sum += node.reputation;
      ++faulty_n;
    }
  }
  if (honest_n) out.honest_mean_reputation = honest_sum / honest_n;
  if (faulty_n) out.faulty_mean_reputation = faulty_sum / faulty_n;
  return out;
}

consensus::NetworkState make_network(const ExperimentConfig& cfg,
                                     double byz_fraction, NodeId id_base,
                                     const std::vector<NodeId>& extra_key_ids) {
  consensus::NetworkState st;
  st.nodes = consensus::make_nodes(cfg.n_full, byz_fraction,
                                   cfg.reputation.r0, cfg.master_seed,
                                   id_base);
  std::vector<NodeId> ids = extra_key_ids;
  for (const auto& node : st.nodes) ids.push_back(node.id);
  st.keys = KeyRegistry::generate(cfg.master_seed, ids);
  st.master_seed = cfg.master_seed;
  st.sortition = cfg.sortition;
  st.reputation = cfg.reputation;
  return st;
}

}  // namespace

CoalitionOutcome run_coalition_experiment(
    const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  graph::SocialGraph g = build_graph(cfg);
  auto ids = g.avatar_ids();
  auto profiles = draw_profiles(cfg, ids);

  CoalitionOutcome outcome;
  outcome.trace = coalition::form_stable_partition(
      g, profiles, cfg.quality, cfg.trust, cfg.max_iterations);

  double noncoop_sum = 0.0;
  for (auto id : ids)
    noncoop_sum += coalition::noncoop_payoff(id, profiles, cfg.quality);
  outcome.noncoop_mean = noncoop_sum / static_cast<double>(ids.size());
  outcome.final_mean =
      outcome.trace.avg_payoff_series.back().mean_individual_payoff;

  write_text_file(out_dir / "graph.json", graph::graph_to_json(g, cfg.trust));
  CsvWriter fig(out_dir / "coalition.csv",
                "iteration,socialfl_avg_payoff,noncoop_avg_payoff,"
                "num_clusters");
  CsvWriter trace(out_dir / "game_trace.csv",
                  "iteration,mean_individual_payoff,num_clusters,moved_count");
  for (const auto& stats : outcome.trace.avg_payoff_series) {
    if (stats.iteration == 0) continue;  // rows cover completed passes
    fig.row({std::to_string(stats.iteration),
             format_double(stats.mean_individual_payoff),
             format_double(outcome.noncoop_mean),
             std::to_string(stats.num_clusters)});
    trace.row({std::to_string(stats.iteration),
               format_double(stats.mean_individual_payoff),
               std::to_string(stats.num_clusters),
               std::to_string(stats.moved_count)});
  }
  return outcome;
}

ConsensusOutcome run_consensus_experiment(
    const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto st = make_network(cfg, cfg.byz_fraction, 0, {});

  std::vector<consensus::HeightReport> reports;
  reports.reserve(cfg.rounds);
  for (std::size_t h = 1; h <= cfg.rounds; ++h) {
    // Each height carries one synthetic global-aggregation transaction.
    auto stream =
        derive_stream(cfg.master_seed, "harness.consensus.model", h);
    flsim::ModelVector model;
    model.values.resize(4);
    for (auto& v : model.values) v = stream.gaussian();
    Digest ptr = st.store.put(model_payload(model));
    st.mempool.push_back(ledger::make_gatx(st.task_id, h, ptr,
                                           st.nodes.front().id, st.keys));
    reports.push_back(consensus::run_height(st));
  }

  ConsensusOutcome outcome = summarize_network(reports, st.nodes);
  write_consensus_rows(out_dir, reports, outcome);
  return outcome;
}

std::vector<ProvenanceCell> run_provenance_experiment(
    const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  provenance::CollusionConfig cc;
  cc.n_clients = cfg.attacks.n_clients;
  cc.thresholds = cfg.verify;
  cc.fused_count = cfg.fused_count;
  cc.base_model_seed = derive_seed(cfg.master_seed, "harness.base");
  cc.base_model = provenance::make_base_model(cc.classifier,
                                              cc.base_model_seed);

  std::vector<ProvenanceCell> cells;
  std::uint64_t cell_index = 0;
  for (const auto& kind_name : cfg.attacks.kinds) {
    auto kind = attack_from_name(kind_name);
    for (double ratio : cfg.attacks.ratios) {
      std::uint64_t seed =
          derive_seed(cfg.master_seed, "harness.prov", cell_index++);
      double rate = provenance::simulate_collusion(kind, ratio,
                                                   cfg.attacks.trials, seed,
                                                   cc);
      ProvenanceCell cell;
      cell.attack = kind_name;
      cell.ratio = ratio;
      cell.trials = cfg.attacks.trials;
      cell.successes = static_cast<std::size_t>(
          std::llround(rate * static_cast<double>(cfg.attacks.trials)));
      cell.rate = rate;
      cells.push_back(cell);
    }
  }

  CsvWriter csv(out_dir / "provenance.csv",
                "attack,ratio,trials,successes,rate");
  for (const auto& c : cells)
    csv.row({c.attack, format_double(c.ratio), std::to_string(c.trials),
             std::to_string(c.successes), format_double(c.rate)});
  return cells;
}

PipelineOutcome run_full_pipeline(const ExperimentConfig& cfg,
                                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  // Stage 1: social graph and stable clusters (writes the coalition CSVs).
  CoalitionOutcome co = run_coalition_experiment(cfg, out_dir);
  graph::SocialGraph g = build_graph(cfg);
  auto avatar_ids = g.avatar_ids();
  auto profiles = draw_profiles(cfg, avatar_ids);
  const auto& partition = co.trace.final_partition;

  // Stage 2: honest consensus network over ids disjoint from the avatars.
  NodeId node_base = avatar_ids.empty() ? 0 : avatar_ids.back() + 1;
  auto st = make_network(cfg, 0.0, node_base, avatar_ids);
  NodeId provider = st.nodes.front().id;

  auto truth = flsim::make_ground_truth(
      cfg.model_dim, derive_seed(cfg.master_seed, "harness.truth"));

  // Task request opens the ledger's first height.
  Digest init_ptr = st.store.put(
      model_payload(flsim::ModelVector{std::vector<double>(cfg.model_dim)}));
  st.mempool.push_back(
      ledger::make_trtx(st.task_id, 0.0, provider, 100.0, init_ptr, 0.9,
                        st.keys));

  // Per-round micropayment from the provider: one hashchain commit per
  // appended block, settled immediately by the receiving side.
  ByteWriter seed_bytes;
  seed_bytes.put_u64(cfg.master_seed);
  seed_bytes.put_string("harness.payment");
  ledger::Hashchain payments(sha256(seed_bytes.bytes()), cfg.rounds + 1);

  std::vector<consensus::HeightReport> reports;
  CsvWriter fl_csv(out_dir / "fl_rounds.csv",
                   "round,num_clusters,global_utility");
  CsvWriter pay_csv(out_dir / "payments.csv", "round,k,commitment,settled");

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    std::vector<flsim::SocialAggregate> aggregates;
    for (const auto& [cluster_id, members] : partition.clusters()) {
      std::vector<flsim::LocalUpdate> updates;
      std::vector<NodeId> member_ids;
      std::vector<double> contributions;
      for (auto member : members) {
        updates.push_back(flsim::local_update(profiles.at(member), truth,
                                              round, cfg.master_seed));
        member_ids.push_back(member);
        contributions.push_back(
            coalition::contribution_of(profiles.at(member)));
      }
      auto agg = flsim::pre_aggregate_cluster(updates, cfg.dp,
                                              cfg.master_seed, round);
      Digest agg_ptr = st.store.put(aggregate_payload(agg));
      st.mempool.push_back(ledger::make_satx(st.task_id, member_ids, agg_ptr,
                                             contributions, st.keys));
      aggregates.push_back(std::move(agg));
    }

    // Edge layer: clusters round-robin over the edge aggregators.
    std::vector<flsim::SocialAggregate> edge_results;
    for (std::size_t e = 0; e < cfg.n_edges; ++e) {
      std::vector<flsim::SocialAggregate> slice;
      for (std::size_t i = e; i < aggregates.size(); i += cfg.n_edges)
        slice.push_back(aggregates[i]);
      if (!slice.empty())
        edge_results.push_back(flsim::edge_aggregate(slice));
    }
    auto global = flsim::global_aggregate(edge_results);
    Digest global_ptr = st.store.put(model_payload(global));
    st.mempool.push_back(
        ledger::make_gatx(st.task_id, round, global_ptr, provider, st.keys));

    auto report = consensus::run_height(st);
    if (report.empty_block)
      throw std::runtime_error(
          "pipeline: honest network failed to decide height " +
          std::to_string(report.height));
    reports.push_back(report);

    Digest token = payments.commit();
    std::size_t k = payments.revealed();
    bool settled = ledger::hashchain_settle(payments.anchor(), token, k);
    pay_csv.row({std::to_string(round), std::to_string(k), to_hex(token),
                 settled ? "1" : "0"});
    fl_csv.row({std::to_string(round),
                std::to_string(partition.num_clusters()),
                format_double(flsim::empirical_utility(global, truth))});
  }

  // Stage 3: shared-ownership watermark over the trained service, then one
  // genuine verification recorded on-chain.
  provenance::ClassifierConfig ccfg;
  provenance::WatermarkConfig wmcfg;
  wmcfg.input_dim = ccfg.input_dim;
  wmcfg.num_classes = ccfg.num_classes;
  std::uint64_t wm_seed = derive_seed(cfg.master_seed, "harness.wm");
  std::uint64_t fusion_seed = derive_seed(cfg.master_seed, "harness.fusion");

  provenance::WatermarkRegistry registry(
      std::vector<provenance::ClientId>(avatar_ids.begin(),
                                        avatar_ids.end()));
  std::map<provenance::ClientId, std::vector<provenance::TriggerSample>>
      submissions;
  for (auto id : avatar_ids) {
    auto wm = provenance::gen_private_watermark(id, wm_seed, wmcfg);
    std::vector<provenance::TriggerSample> upload;
    for (std::size_t idx : wm.upload_subset) upload.push_back(wm.samples[idx]);
    submissions[id] = upload;
    registry.register_upload(id, std::move(upload));
  }
  registry.seal();

  auto base = provenance::make_base_model(
      ccfg, derive_seed(cfg.master_seed, "harness.base"));
  auto joint = provenance::fuse_joint(registry, fusion_seed, cfg.fused_count,
                                      ccfg.num_classes);
  auto service = provenance::embed_joint(*base, joint, ccfg.embed_max_steps,
                                         cfg.verify.eps_gap / 2.0);
  auto record = provenance::verify_ownership(service, submissions, registry,
                                             cfg.verify, fusion_seed,
                                             cfg.fused_count);

  Digest verdict_ptr = st.store.put(record.record_bytes);
  st.mempool.push_back(
      ledger::make_pvtx(st.task_id, verdict_ptr, provider, st.keys));
  auto final_report = consensus::run_height(st);
  if (final_report.empty_block)
    throw std::runtime_error(
        "pipeline: honest network failed to decide the verdict height");
  reports.push_back(final_report);

  CsvWriter verify_csv(out_dir / "verification.csv",
                       "verdict,gap,scoring_flag,missing_count,record_digest");
  verify_csv.row({provenance::verdict_name(record.verdict),
                  format_double(record.gap),
                  record.scoring_flag ? "1" : "0",
                  std::to_string(record.missing_clients.size()),
                  to_hex(record.record_digest)});

  ConsensusOutcome summary = summarize_network(reports, st.nodes);
  write_consensus_rows(out_dir, reports, summary);

  {
    std::ofstream chain_out(out_dir / "chain.jsonl",
                            std::ios::binary | std::ios::trunc);
    if (!chain_out)
      throw ConfigError("cannot open output file: " +
                        (out_dir / "chain.jsonl").string());
    st.chain.export_records(chain_out);
  }
  st.store.persist(out_dir / "offchain");

  PipelineOutcome outcome;
  outcome.blocks = st.chain.blocks().size() - 1;
  outcome.verdict = record.verdict;
  outcome.verify_gap = record.gap;
  outcome.chain_tip = ledger::block_hash(st.chain.tip());
  outcome.config_digest = config_digest(cfg);

  json manifest;
  manifest["master_seed"] = cfg.master_seed;
  manifest["config_digest"] = to_hex(outcome.config_digest);
  manifest["chain_tip"] = to_hex(outcome.chain_tip);
  manifest["blocks"] = outcome.blocks;
  manifest["offchain_entries"] = st.store.size();
  manifest["verdict"] = provenance::verdict_name(record.verdict);
  manifest["versions"] = {{"artifact", kVersion},
                          {"config_schema", 1},
                          {"chain_export", 1}};
  manifest["files"] = {"chain.jsonl",     "coalition.csv",
                       "consensus.csv",   "consensus_summary.csv",
                       "fl_rounds.csv",   "game_trace.csv",
                       "graph.json",      "payments.csv",
                       "verification.csv"};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

}  // namespace socialfl::harness
