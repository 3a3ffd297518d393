// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "farm/error.hpp"

using namespace farm::cli;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"farm: cross-domain live-streaming recommender"};
  app.require_subcommand(1);

  std::optional<fs::path> config;
  Overrides ov;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "flat key=value config file");
    sub->add_option("--seed", seed, "run seed (gen-data: generator seed)");
    sub->add_flag("--large-batch-preset", ov.large_batch_preset, "start from the large-batch preset");
  };
  auto add_ablation_flags = [&](CLI::App* sub) {
    sub->add_flag("--no-vfa", ov.no_vfa, "disable the video frequency path");
    sub->add_flag("--no-lfa", ov.no_lfa, "disable the live frequency path");
    sub->add_flag("--no-cpa", ov.no_cpa, "disable contrastive alignment");
    sub->add_flag("--no-cpf", ov.no_cpf, "disable cross-domain fusion");
  };

  fs::path out, data, ckpt;
  std::optional<fs::path> out_opt;
  std::string seeds = "1,2,3";
  std::size_t n_users = 10000;
  std::uint64_t user = 0;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic event stream");
  add_common(gen);
  gen->add_option("--out", out, "dataset file (.jsonl or .jsonl.gz)")->required();

  auto* tr = app.add_subcommand("train", "train a model and write a run directory");
  add_common(tr);
  add_ablation_flags(tr);
  tr->add_option("--data", data, "dataset file")->required();
  tr->add_option("--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test day");
  ev->add_option("--config", config, "config file (default: config.txt next to the checkpoint)");
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("--data", data, "dataset file")->required();
  ev->add_option("--out", out_opt, "directory for report.json / report.txt");

  auto* ab = app.add_subcommand("ablate", "train the full model and the four ablations");
  add_common(ab);
  ab->add_option("--data", data, "dataset file")->required();
  ab->add_option("--out", out_opt, "output directory");
  ab->add_option("--seeds", seeds, "comma-separated seeds");

  auto* sim = app.add_subcommand("export-similarity", "per-user alignment cosine similarity CSV");
  sim->add_option("--config", config, "config file (default: config.txt next to the checkpoint)");
  sim->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  sim->add_option("--data", data, "dataset file")->required();
  sim->add_option("--out", out, "CSV file")->required();
  sim->add_option("--users", n_users, "number of sampled users");

  auto* att = app.add_subcommand("export-attention", "cross-attention weights of one user as CSV");
  att->add_option("--config", config, "config file (default: config.txt next to the checkpoint)");
  att->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  att->add_option("--data", data, "dataset file")->required();
  att->add_option("--user", user, "user id")->required();
  att->add_option("--out", out, "CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      farm::RunConfig cfg = resolve_config(config, ov);
      if (seed) cfg.stream.seed = *seed;
      cmd_gen_data(cfg, out, std::cout);
    } else if (tr->parsed()) {
      ov.seed = seed;
      cmd_train(resolve_config(config, ov), data, out, std::cout);
    } else if (ev->parsed()) {
      cmd_eval(ckpt, data, config, out_opt, std::cout);
    } else if (ab->parsed()) {
      ov.seed = seed;
      cmd_ablate(resolve_config(config, ov), data, parse_seeds(seeds), out_opt, std::cout);
    } else if (sim->parsed()) {
      cmd_export_similarity(ckpt, data, config, out, n_users, std::cout);
    } else if (att->parsed()) {
      cmd_export_attention(ckpt, data, config, user, out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
