// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "farm/run_config.hpp"
#include "farm/trainer.hpp"

namespace farm::cli {

namespace fs = std::filesystem;

// Command-line overrides applied on top of a config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  bool no_vfa = false;
  bool no_lfa = false;
  bool no_cpa = false;
  bool no_cpf = false;
  bool large_batch_preset = false;
};

RunConfig resolve_config(const std::optional<fs::path>& config_path, const Overrides& o);

// Git blob hash (SHA-1 of "blob <size>\0" + content), hex.
std::string git_blob_hash(const fs::path& file);

struct GenDataSummary {
  std::size_t video_events = 0;
  std::size_t live_events = 0;
  std::array<std::size_t, kNumTasks> live_positives{};
};
GenDataSummary cmd_gen_data(const RunConfig& cfg, const fs::path& out, std::ostream& log);

// Writes config.txt, dataset.sha1, checkpoint.bin, report.json and
// report.txt into `out_dir`.
train::RunReport cmd_train(RunConfig cfg, const fs::path& dataset, const fs::path& out_dir,
                           std::ostream& log);

// Config comes from `config_path` or from config.txt next to the checkpoint.
train::RunReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset,
                          const std::optional<fs::path>& config_path,
                          const std::optional<fs::path>& out_dir, std::ostream& log);

struct AblationRow {
  std::string variant;
  std::vector<train::EvalReport> per_seed;
  // Metrics averaged over seeds: [task][auc, uauc, gauc].
  std::array<std::array<double, 3>, kNumTasks> mean{};
  double sparse_auc = 0.0;  // mean AUC over like, comment, gift
};
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& dataset,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::optional<fs::path>& out_dir, std::ostream& log);
std::string ablation_table(const std::vector<AblationRow>& rows);

void cmd_export_similarity(const fs::path& checkpoint, const fs::path& dataset,
                           const std::optional<fs::path>& config_path, const fs::path& out_csv,
                           std::size_t n_users, std::ostream& log);
void cmd_export_attention(const fs::path& checkpoint, const fs::path& dataset,
                          const std::optional<fs::path>& config_path, std::uint64_t user_id,
                          const fs::path& out_csv, std::ostream& log);

// Loads a run's config for a checkpoint (explicit path or sibling config.txt).
RunConfig config_for_checkpoint(const fs::path& checkpoint,
                                const std::optional<fs::path>& config_path);

}  // namespace farm::cli
