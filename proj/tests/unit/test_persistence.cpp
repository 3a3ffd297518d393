// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "farm/checkpoint.hpp"
#include "farm/data.hpp"
#include "farm/dataset_io.hpp"
#include "farm/error.hpp"
#include "farm/model.hpp"
#include "farm/numerics/optim.hpp"
#include "farm/run_config.hpp"
#include "test_support.hpp"

namespace {

using farm::RunConfig;
using farm::num::ParamStore;
using farm::num::Tensor;
using farm::testing::TempDir;

ParamStore stepped_params() {
  const auto vocab = farm::testing::tiny_vocab();
  ParamStore ps = farm::model::init_params(farm::testing::tiny_config(), vocab, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int step = 0; step < 2; ++step) {
    for (auto& [name, e] : ps.entries())
      for (double& g : e.grad.data()) g = nd(rng);
    farm::num::adam_step(ps, farm::num::AdamConfig{});
  }
  return ps;
}

void expect_same(const ParamStore& a, const ParamStore& b) {
  ASSERT_EQ(a.names(), b.names());
  EXPECT_EQ(a.step_count(), b.step_count());
  for (const auto& [name, e] : a.entries()) {
    const auto& f = b.at(name);
    EXPECT_EQ(e.value, f.value) << name;
    EXPECT_EQ(e.adam_m, f.adam_m) << name;
    EXPECT_EQ(e.adam_v, f.adam_v) << name;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ParamStore ps = stepped_params();
  std::stringstream ss;
  farm::checkpoint::write(ss, ps);
  expect_same(ps, farm::checkpoint::read(ss));
  TempDir dir("ckpt");
  farm::checkpoint::save(dir / "c.bin", ps);
  expect_same(ps, farm::checkpoint::load(dir / "c.bin"));
}

TEST(Checkpoint, HeaderLayout) {
  ParamStore ps;
  ps.add("w", Tensor::matrix(1, 2, {1.5, -2.0}));
  ps.set_step_count(7);
  std::stringstream ss;
  farm::checkpoint::write(ss, ps);
  const std::string bytes = ss.str();
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 8), "FARMCKPT");
  std::uint32_t version = 0, count = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&count, bytes.data() + 12, 4);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(count, 4u);  // w, w.m, w.v, optimizer.step
  // First entry: name length, name, rank, dims, values.
  std::uint32_t len = 0, rank = 0, d0 = 0, d1 = 0;
  std::memcpy(&len, bytes.data() + 16, 4);
  ASSERT_EQ(len, 1u);
  EXPECT_EQ(bytes[20], 'w');
  std::memcpy(&rank, bytes.data() + 21, 4);
  std::memcpy(&d0, bytes.data() + 25, 4);
  std::memcpy(&d1, bytes.data() + 29, 4);
  EXPECT_EQ(rank, 2u);
  EXPECT_EQ(d0, 1u);
  EXPECT_EQ(d1, 2u);
  double v0 = 0;
  std::memcpy(&v0, bytes.data() + 33, 8);
  EXPECT_EQ(v0, 1.5);
}

TEST(Checkpoint, RejectsBadInput) {
  ParamStore ps;
  ps.add("w", Tensor({1, 1}, 1.0));
  std::stringstream ss;
  farm::checkpoint::write(ss, ps);
  std::string bytes = ss.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(farm::checkpoint::read(a), farm::FormatError);

  std::string bad_version = bytes;
  bad_version[8] = 2;
  std::istringstream b(bad_version);
  EXPECT_THROW(farm::checkpoint::read(b), farm::FormatError);

  std::istringstream c(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(farm::checkpoint::read(c), farm::FormatError);

  EXPECT_THROW(farm::checkpoint::load("/nonexistent/ckpt.bin"), farm::Error);
}

TEST(Dataset, RoundTripPlainAndGzip) {
  farm::data::StreamConfig cfg;
  cfg.n_users = 20;
  cfg.n_authors_per_domain = 100;
  cfg.rho = 0.7;
  const auto events = farm::data::generate_stream(cfg);
  TempDir dir("ds");
  for (const char* name : {"d.jsonl", "d.jsonl.gz"}) {
    farm::data::write_dataset(dir / name, cfg, events);
    const auto back = farm::data::read_dataset(dir / name);
    EXPECT_EQ(back.events, events) << name;
    EXPECT_EQ(back.config.rho, 0.7);
    EXPECT_EQ(back.config.n_authors_per_domain, 100);
    EXPECT_EQ(back.vocab(), cfg.vocab());
  }
  // Gzip output really is compressed.
  const std::string gz = farm::testing::read_file(dir / "d.jsonl.gz");
  ASSERT_GE(gz.size(), 2u);
  EXPECT_EQ(static_cast<unsigned char>(gz[0]), 0x1f);
  EXPECT_EQ(static_cast<unsigned char>(gz[1]), 0x8b);
  // Deterministic bytes.
  farm::data::write_dataset(dir / "again.jsonl", cfg, events);
  EXPECT_EQ(farm::testing::read_file(dir / "again.jsonl"), farm::testing::read_file(dir / "d.jsonl"));
}

TEST(Dataset, HeaderAndFieldNames) {
  farm::data::StreamConfig cfg;
  cfg.n_users = 3;
  const auto events = farm::data::generate_stream(cfg);
  TempDir dir("hdr");
  farm::data::write_dataset(dir / "d.jsonl", cfg, events);
  std::ifstream in(dir / "d.jsonl");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_NE(header.find("\"schema\":\"farm.events\""), std::string::npos) << header;
  EXPECT_NE(header.find("\"version\":1"), std::string::npos);
  for (const char* key : {"user_id", "domain", "author_id", "timestamp", "side_info", "labels",
                          "session_id", "play_bucket", "lag_bucket", "label_code"}) {
    EXPECT_NE(first.find(std::string("\"") + key + "\""), std::string::npos) << key;
  }
  EXPECT_EQ(farm::data::event_from_json(farm::data::event_to_json(events[0])), events[0]);
}

TEST(Dataset, RejectsMalformedFiles) {
  TempDir dir("bad");
  {
    std::ofstream out(dir / "wrong.jsonl");
    out << "{\"schema\":\"other\",\"version\":1}\n";
  }
  EXPECT_THROW(farm::data::read_dataset(dir / "wrong.jsonl"), farm::FormatError);
  {
    std::ofstream out(dir / "v2.jsonl");
    out << "{\"schema\":\"farm.events\",\"version\":2,\"events\":0,\"config\":{}}\n";
  }
  EXPECT_THROW(farm::data::read_dataset(dir / "v2.jsonl"), farm::FormatError);
  EXPECT_THROW(farm::data::event_from_json("{\"user_id\": 1}"), farm::FormatError);
  EXPECT_THROW(farm::data::read_dataset(dir / "missing.jsonl"), farm::Error);
}

TEST(RunConfig, TextRoundTripAndHash) {
  RunConfig c;
  c.model.lambda = 0.3;
  c.model.ablation.cross_fuse = false;
  c.stream.base_rates[5] = 0.0005;
  c.seed = 99;
  const RunConfig back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.model.ablation.cross_fuse, false);
  EXPECT_NE(RunConfig{}.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(RunConfig, ParseOverridesAndErrors) {
  const RunConfig c = RunConfig::parse("# comment\n lr = 0.01 \ncpa=false\nstream.rho=0.5\n");
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_FALSE(c.model.ablation.contrastive_align);
  EXPECT_EQ(c.stream.rho, 0.5);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(RunConfig::parse("preset=large-batch").batch_size, 5000u);
  EXPECT_THROW(RunConfig::parse("nope=1"), farm::ConfigError);
  EXPECT_THROW(RunConfig::parse("lr=abc"), farm::ConfigError);
  EXPECT_THROW(RunConfig::parse("cpa=maybe"), farm::ConfigError);
  EXPECT_THROW(RunConfig::parse("just text"), farm::ConfigError);
}

TEST(RunConfig, DefaultsAndValidation) {
  const RunConfig c;
  EXPECT_EQ(c.model.seq_len, 50u);
  EXPECT_EQ(c.model.video_dim, 92u);
  EXPECT_EQ(c.model.live_dim, 64u);
  EXPECT_EQ(c.model.cutoff.c, 5u);
  EXPECT_EQ(c.model.lambda, 0.5);
  EXPECT_EQ(c.model.tau, 0.07);
  EXPECT_EQ(c.model.attention.num_heads, 4u);
  EXPECT_EQ(c.model.attention.model_dim, 64u);
  EXPECT_EQ(c.model.n_experts, 4u);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_NO_THROW(c.validate());
  RunConfig bad;
  bad.train_days = 8;
  EXPECT_THROW(bad.validate(), farm::ConfigError);
  bad = {};
  bad.model.attention.num_heads = 3;
  EXPECT_THROW(bad.validate(), farm::ConfigError);
}

TEST(RunConfig, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(farm::derive_seed(1, "init"), farm::derive_seed(1, "init"));
  EXPECT_NE(farm::derive_seed(1, "init"), farm::derive_seed(2, "init"));
  EXPECT_NE(farm::derive_seed(1, "init"), farm::derive_seed(1, "order.0"));
}

}  // namespace
