// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "farm/checkpoint.hpp"
#include "farm/dataset_io.hpp"
#include "test_support.hpp"

namespace {

namespace cli = farm::cli;
using farm::testing::read_file;
using farm::testing::TempDir;

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// One small dataset and trained run shared by the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    cfg_ = new farm::RunConfig(farm::testing::tiny_run(30));
    std::ostringstream log;
    cli::cmd_gen_data(*cfg_, *dir_ / "data.jsonl", log);
    report_ = new farm::train::RunReport(cli::cmd_train(*cfg_, *dir_ / "data.jsonl", *dir_ / "run", log));
  }
  static void TearDownTestSuite() {
    delete report_;
    delete cfg_;
    delete dir_;
  }
  static TempDir* dir_;
  static farm::RunConfig* cfg_;
  static farm::train::RunReport* report_;
};

TempDir* CliTest::dir_ = nullptr;
farm::RunConfig* CliTest::cfg_ = nullptr;
farm::train::RunReport* CliTest::report_ = nullptr;

TEST_F(CliTest, GenDataIsByteIdentical) {
  std::ostringstream log;
  const auto summary = cli::cmd_gen_data(*cfg_, *dir_ / "again.jsonl", log);
  EXPECT_EQ(read_file(*dir_ / "again.jsonl"), read_file(*dir_ / "data.jsonl"));
  EXPECT_GT(summary.video_events, summary.live_events);
  EXPECT_GE(summary.live_positives[0], summary.live_positives[5]);
}

TEST_F(CliTest, TrainWritesRunDirectory) {
  for (const char* f : {"config.txt", "dataset.sha1", "checkpoint.bin", "report.json", "report.txt"})
    EXPECT_TRUE(std::filesystem::exists(*dir_ / "run" / f)) << f;
  EXPECT_EQ(read_file(*dir_ / "run" / "config.txt"), cfg_->to_text());
  EXPECT_EQ(read_file(*dir_ / "run" / "dataset.sha1"), cli::git_blob_hash(*dir_ / "data.jsonl") + "\n");
  EXPECT_EQ(read_file(*dir_ / "run" / "report.json"), report_->to_json());
  EXPECT_EQ(report_->dataset_hash, cli::git_blob_hash(*dir_ / "data.jsonl"));
}

TEST_F(CliTest, EvalReproducesTrainReport) {
  std::ostringstream log;
  const auto a = cli::cmd_eval(*dir_ / "run" / "checkpoint.bin", *dir_ / "data.jsonl", std::nullopt,
                               *dir_ / "eval_a", log);
  const auto b = cli::cmd_eval(*dir_ / "run" / "checkpoint.bin", *dir_ / "data.jsonl", std::nullopt,
                               std::nullopt, log);
  for (std::size_t t = 0; t < farm::kNumTasks; ++t) {
    EXPECT_EQ(a.test.tasks[t].auc, b.test.tasks[t].auc);
    EXPECT_EQ(a.test.tasks[t].auc, report_->test.tasks[t].auc) << t;
    EXPECT_EQ(a.test.tasks[t].gauc, report_->test.tasks[t].gauc) << t;
  }
  EXPECT_EQ(a.test.l_xtrs, report_->test.l_xtrs);
}

TEST_F(CliTest, EvalRejectsCorruptCheckpoint) {
  std::filesystem::copy_file(*dir_ / "run" / "checkpoint.bin", *dir_ / "bad.bin",
                             std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(*dir_ / "bad.bin", 100);
  std::ostringstream log;
  EXPECT_THROW(cli::cmd_eval(*dir_ / "bad.bin", *dir_ / "data.jsonl", *dir_ / "run" / "config.txt",
                             std::nullopt, log),
               farm::FormatError);
}

TEST_F(CliTest, ExportSimilarityIsBoundedCosine) {
  std::ostringstream log;
  cli::cmd_export_similarity(*dir_ / "run" / "checkpoint.bin", *dir_ / "data.jsonl", std::nullopt,
                             *dir_ / "sim.csv", 10, log);
  const auto rows = read_csv(*dir_ / "sim.csv");
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"user_id", "cosine"}));
  EXPECT_LE(rows.size(), 11u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 2u);
    const double c = std::stod(rows[i][1]);
    EXPECT_GE(c, -1.0 - 1e-12);
    EXPECT_LE(c, 1.0 + 1e-12);
  }
}

TEST_F(CliTest, ExportAttentionRowsAreDistributions) {
  const auto ds = farm::data::read_dataset(*dir_ / "data.jsonl");
  const farm::data::SampleSet all(ds.events, ds.vocab(), cfg_->model.seq_len);
  std::optional<std::uint64_t> user;
  for (auto u : all.user_ids()) {
    const auto st = all.latest_state(u);
    if (st && st->video.size() >= 3 && st->live.size() >= 3) {
      user = u;
      break;
    }
  }
  ASSERT_TRUE(user.has_value());
  std::ostringstream log;
  cli::cmd_export_attention(*dir_ / "run" / "checkpoint.bin", *dir_ / "data.jsonl", std::nullopt,
                            *user, *dir_ / "att.csv", log);
  const auto rows = read_csv(*dir_ / "att.csv");
  const auto st = all.latest_state(*user);
  const std::size_t n_live = std::min(st->live.size(), cfg_->model.seq_len);
  const std::size_t n_video = std::min(st->video.size(), cfg_->model.seq_len);
  ASSERT_EQ(rows.size(), n_live + 1);
  ASSERT_EQ(rows[0].size(), n_video + 1);
  EXPECT_EQ(rows[0][0], "live_pos");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    double sum = 0;
    for (std::size_t k = 1; k < rows[i].size(); ++k) {
      const double w = std::stod(rows[i][k]);
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_THROW(cli::cmd_export_attention(*dir_ / "run" / "checkpoint.bin", *dir_ / "data.jsonl",
                                         std::nullopt, 999999, *dir_ / "x.csv", log),
               farm::DataError);
}

TEST_F(CliTest, AblationTableHasOneRowPerVariant) {
  std::vector<cli::AblationRow> rows;
  for (const auto& v : farm::train::ablation_variants()) {
    cli::AblationRow r;
    r.variant = v.name;
    r.sparse_auc = 0.7;
    rows.push_back(r);
  }
  const std::string table = cli::ablation_table(rows);
  std::size_t lines = 0;
  for (char ch : table) lines += ch == '\n';
  EXPECT_EQ(lines, 6u);
  EXPECT_NE(table.find("w/o C-PF"), std::string::npos) << table;
}

TEST(CliConfig, OverridesApplyOnTopOfFile) {
  TempDir dir("cfg");
  {
    std::ofstream out(dir / "c.txt");
    out << "lr=0.01\nseed=5\n";
  }
  cli::Overrides o;
  o.seed = 9;
  o.no_cpa = true;
  o.no_lfa = true;
  const auto c = cli::resolve_config(dir / "c.txt", o);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(c.model.ablation.contrastive_align);
  EXPECT_FALSE(c.model.ablation.live_frequency);
  EXPECT_TRUE(c.model.ablation.video_frequency);
  EXPECT_TRUE(c.model.ablation.cross_fuse);
  cli::Overrides p;
  p.large_batch_preset = true;
  EXPECT_EQ(cli::resolve_config(std::nullopt, p).batch_size, 5000u);
  EXPECT_THROW(cli::resolve_config(dir / "missing.txt", {}), farm::Error);
}

TEST(CliHash, MatchesGitBlobHash) {
  TempDir dir("hash");
  {
    std::ofstream out(dir / "h.txt");
    out << "hello\n";
  }
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(cli::git_blob_hash(dir / "h.txt"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

}  // namespace
