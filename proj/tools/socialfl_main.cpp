#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "socialfl/harness.hpp"

namespace fs = std::filesystem;
using namespace socialfl;

namespace {

void print_coalition(const harness::CoalitionOutcome& out) {
  const auto& last = out.trace.avg_payoff_series.back();
  std::cout << "coalition: iterations=" << out.trace.iterations
            << " converged=" << (out.trace.truncated ? "no" : "yes")
            << " clusters=" << last.num_clusters
            << " final_mean=" << harness::format_double(out.final_mean)
            << " noncoop_mean=" << harness::format_double(out.noncoop_mean)
            << '\n';
}

void print_consensus(const harness::ConsensusOutcome& out) {
  std::cout << "consensus: heights=" << out.reports.size()
            << " safety_violations=" << out.safety_violations
            << " empty_blocks=" << out.empty_blocks << " honest_mean="
            << harness::format_double(out.honest_mean_reputation)
            << " faulty_mean="
            << harness::format_double(out.faulty_mean_reputation) << '\n';
}

void print_provenance(const std::vector<harness::ProvenanceCell>& cells) {
  for (const auto& c : cells)
    std::cout << "provenance: attack=" << c.attack
              << " ratio=" << harness::format_double(c.ratio)
              << " trials=" << c.trials << " successes=" << c.successes
              << " rate=" << harness::format_double(c.rate) << '\n';
}

void print_pipeline(const harness::PipelineOutcome& out) {
  std::cout << "pipeline: blocks=" << out.blocks
            << " verdict=" << provenance::verdict_name(out.verdict)
            << " gap=" << harness::format_double(out.verify_gap)
            << " chain_tip=" << to_hex(out.chain_tip)
            << " config_digest=" << to_hex(out.config_digest) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"social-trust federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory override");
  auto* seed_opt = app.add_option("--seed", seed, "master seed override");

  auto* cmd_coalition =
      app.add_subcommand("coalition", "coalition-formation experiment");
  auto* cmd_consensus =
      app.add_subcommand("consensus", "consensus fault-injection experiment");
  auto* cmd_provenance =
      app.add_subcommand("provenance", "collusion-attack sweep");
  auto* cmd_pipeline =
      app.add_subcommand("pipeline", "end-to-end ledger pipeline");
  auto* cmd_all = app.add_subcommand("all", "run every experiment");
  for (auto* cmd :
       {cmd_coalition, cmd_consensus, cmd_provenance, cmd_pipeline, cmd_all})
    cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    harness::ExperimentConfig cfg = config_path.empty()
                                        ? harness::default_config(0)
                                        : harness::load_config(config_path);
    if (seed_opt->count() > 0) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    fs::path out(cfg.out_dir);

    if (app.got_subcommand(cmd_coalition)) {
      print_coalition(harness::run_coalition_experiment(cfg, out));
    } else if (app.got_subcommand(cmd_consensus)) {
      print_consensus(harness::run_consensus_experiment(cfg, out));
    } else if (app.got_subcommand(cmd_provenance)) {
      print_provenance(harness::run_provenance_experiment(cfg, out));
    } else if (app.got_subcommand(cmd_pipeline)) {
      print_pipeline(harness::run_full_pipeline(cfg, out));
    } else if (app.got_subcommand(cmd_all)) {
      print_coalition(
          harness::run_coalition_experiment(cfg, out / "coalition"));
      print_consensus(
          harness::run_consensus_experiment(cfg, out / "consensus"));
      print_provenance(
          harness::run_provenance_experiment(cfg, out / "provenance"));
      print_pipeline(harness::run_full_pipeline(cfg, out / "pipeline"));
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "error (invalid-input): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error (runtime): " << e.what() << '\n';
    return 1;
  }
}
