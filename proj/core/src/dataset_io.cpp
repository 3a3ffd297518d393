// SPDX-License-Identifier: Apache-2.0
#include "farm/dataset_io.hpp"

#include <zlib.h>

#include <fstream>
#include <json.hpp>
#include <memory>

#include "farm/error.hpp"

namespace farm::data {

using json = nlohmann::ordered_json;

namespace {

bool is_gzip(const std::filesystem::path& p) { return p.extension() == ".gz"; }

json config_to_json(const StreamConfig& c) {
  return {{"n_users", c.n_users},
          {"n_authors_per_domain", c.n_authors_per_domain},
          {"days", c.days},
          {"exposure_ratio", c.exposure_ratio},
          {"base_rates", c.base_rates},
          {"rho", c.rho},
          {"seed", c.seed},
          {"latent_dim", c.latent_dim},
          {"n_tags", c.n_tags},
          {"n_clusters", c.n_clusters},
          {"n_pages", c.n_pages},
          {"events_per_user_day", c.events_per_user_day},
          {"activity_spread", c.activity_spread},
          {"exploration", c.exploration},
          {"tag_sharpness", c.tag_sharpness},
          {"affinity_weight", c.affinity_weight},
          {"propensity_weight", c.propensity_weight},
          {"video_rates", c.video_rates}};
}

StreamConfig config_from_json(const json& j) {
  StreamConfig c;
  j.at("n_users").get_to(c.n_users);
  j.at("n_authors_per_domain").get_to(c.n_authors_per_domain);
  j.at("days").get_to(c.days);
  j.at("exposure_ratio").get_to(c.exposure_ratio);
  j.at("base_rates").get_to(c.base_rates);
  j.at("rho").get_to(c.rho);
  j.at("seed").get_to(c.seed);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("n_tags").get_to(c.n_tags);
  j.at("n_clusters").get_to(c.n_clusters);
  j.at("n_pages").get_to(c.n_pages);
  j.at("events_per_user_day").get_to(c.events_per_user_day);
  j.at("activity_spread").get_to(c.activity_spread);
  j.at("exploration").get_to(c.exploration);
  j.at("tag_sharpness").get_to(c.tag_sharpness);
  j.at("affinity_weight").get_to(c.affinity_weight);
  j.at("propensity_weight").get_to(c.propensity_weight);
  j.at("video_rates").get_to(c.video_rates);
  return c;
}

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& p) : gzip_(is_gzip(p)) {
    if (gzip_) {
      gz_ = gzopen(p.string().c_str(), "wb6");
      if (!gz_) throw Error("cannot open " + p.string() + " for writing");
    } else {
      os_.open(p, std::ios::binary | std::ios::trunc);
      if (!os_) throw Error("cannot open " + p.string() + " for writing");
    }
  }
  ~LineWriter() {
    if (gz_) gzclose(gz_);
  }
  void line(const std::string& s) {
    if (gzip_) {
      if (gzwrite(gz_, s.data(), static_cast<unsigned>(s.size())) != static_cast<int>(s.size()) ||
          gzputc(gz_, '\n') != '\n') {
        throw Error("gzip write failed");
      }
    } else {
      os_ << s << '\n';
    }
  }
  void close() {
    if (gz_) {
      const int rc = gzclose(gz_);
      gz_ = nullptr;
      if (rc != Z_OK) throw Error("gzip close failed");
    } else {
      os_.close();
      if (!os_) throw Error("write failed");
    }
  }

 private:
  bool gzip_;
  gzFile gz_ = nullptr;
  std::ofstream os_;
};

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& p) : gzip_(is_gzip(p)) {
    if (gzip_) {
      gz_ = gzopen(p.string().c_str(), "rb");
      if (!gz_) throw Error("cannot open " + p.string());
    } else {
      is_.open(p, std::ios::binary);
      if (!is_) throw Error("cannot open " + p.string());
    }
  }
  ~LineReader() {
    if (gz_) gzclose(gz_);
  }
  bool next(std::string& out) {
    if (!gzip_) return static_cast<bool>(std::getline(is_, out));
    out.clear();
    char buf[4096];
    while (gzgets(gz_, buf, sizeof buf)) {
      out += buf;
      if (!out.empty() && out.back() == '\n') {
        out.pop_back();
        return true;
      }
    }
    return !out.empty();
  }

 private:
  bool gzip_;
  gzFile gz_ = nullptr;
  std::ifstream is_;
};

}  // namespace

std::string event_to_json(const InteractionEvent& e) {
  json labels = json::object();
  for (std::size_t t = 0; t < kNumTasks; ++t) labels[kTaskNames[t]] = e.labels.values[t];
  // Keys are emitted in declaration order of the type.
  json j = json::object();
  j["user_id"] = e.user_id;
  j["domain"] = domain_name(e.domain);
  j["author_id"] = e.author_id;
  j["timestamp"] = e.timestamp;
  j["side_info"] = {{"page", e.side_info.page},
                    {"tag", e.side_info.tag},
                    {"cluster", e.side_info.cluster},
                    {"play_bucket", e.side_info.play_bucket},
                    {"lag_bucket", e.side_info.lag_bucket},
                    {"label_code", e.side_info.label_code}};
  j["labels"] = std::move(labels);
  j["session_id"] = e.session_id;
  return j.dump();
}

namespace {

InteractionEvent parse_event(const std::string& line) {
  const json j = json::parse(line);
  InteractionEvent e;
  j.at("user_id").get_to(e.user_id);
  e.domain = parse_domain(j.at("domain").get<std::string>());
  j.at("author_id").get_to(e.author_id);
  j.at("timestamp").get_to(e.timestamp);
  const json& s = j.at("side_info");
  s.at("page").get_to(e.side_info.page);
  s.at("tag").get_to(e.side_info.tag);
  s.at("cluster").get_to(e.side_info.cluster);
  s.at("play_bucket").get_to(e.side_info.play_bucket);
  s.at("lag_bucket").get_to(e.side_info.lag_bucket);
  s.at("label_code").get_to(e.side_info.label_code);
  const json& l = j.at("labels");
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const int v = l.at(kTaskNames[t]).get<int>();
    if (v != 0 && v != 1) throw FormatError(std::string("label ") + kTaskNames[t] + " not binary");
    e.labels.values[t] = static_cast<std::uint8_t>(v);
  }
  j.at("session_id").get_to(e.session_id);
  return e;
}

}  // namespace

InteractionEvent event_from_json(const std::string& line) {
  try {
    return parse_event(line);
  } catch (const json::exception& ex) {
    throw FormatError(std::string("event: ") + ex.what());
  } catch (const Error& ex) {
    throw FormatError(std::string("event: ") + ex.what());
  }
}

void write_dataset(const std::filesystem::path& path, const StreamConfig& cfg,
                   std::span<const InteractionEvent> events) {
  LineWriter w(path);
  json header = {{"schema", kDatasetSchema},
                 {"version", kDatasetVersion},
                 {"events", events.size()},
                 {"config", config_to_json(cfg)}};
  w.line(header.dump());
  for (const auto& e : events) w.line(event_to_json(e));
  w.close();
}

Dataset read_dataset(const std::filesystem::path& path) {
  LineReader r(path);
  std::string line;
  if (!r.next(line)) throw FormatError(path.string() + ": empty dataset file");
  Dataset ds;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.at("schema") != kDatasetSchema) {
      throw FormatError(path.string() + ": unexpected schema " + header.at("schema").dump());
    }
    const int version = header.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError(path.string() + ": unsupported dataset version " + std::to_string(version));
    }
    expected = header.at("events").get<std::size_t>();
    ds.config = config_from_json(header.at("config"));
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": bad header: " + ex.what());
  }
  ds.events.reserve(expected);
  std::size_t lineno = 1;
  while (r.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.events.push_back(event_from_json(line));
    } catch (const FormatError& ex) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (ds.events.size() != expected) {
    throw FormatError(path.string() + ": header announces " + std::to_string(expected) +
                      " events, found " + std::to_string(ds.events.size()));
  }
  return ds;
}

}  // namespace farm::data
