// SPDX-License-Identifier: Apache-2.0
#include "farm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "farm/error.hpp"

namespace farm::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("checkpoint: truncated");
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const num::Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * 8));
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

void write(std::ostream& os, const num::ParamStore& params) {
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size() * 3 + 1));
  for (const auto& [name, e] : params.entries()) {
    put_tensor(os, name, e.value);
    put_tensor(os, name + ".m", e.adam_m);
    put_tensor(os, name + ".v", e.adam_v);
  }
  put_tensor(os, kStepEntry, num::Tensor({1}, static_cast<double>(params.step_count())));
  if (!os) throw Error("checkpoint: write failed");
}

void save(const std::filesystem::path& path, const num::ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open " + path.string() + " for writing");
  write(os, params);
}

num::ParamStore read(std::istream& is) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
  }
  const std::uint32_t count = get_u32(is);
  std::map<std::string, num::Tensor> raw;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
    const std::uint32_t rank = get_u32(is);
    num::Shape shape(rank);
    for (auto& d : shape) d = get_u32(is);
    num::Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * 8))) {
      throw FormatError("checkpoint: truncated data for " + name);
    }
    if (!raw.emplace(std::move(name), std::move(t)).second) {
      throw FormatError("checkpoint: duplicate entry");
    }
  }
  num::ParamStore ps;
  for (auto& [name, t] : raw) {
    const bool moment = (ends_with(name, ".m") || ends_with(name, ".v")) &&
                        raw.count(name.substr(0, name.size() - 2)) != 0;
    if (name == kStepEntry || moment) continue;
    auto& e = ps.add(name, t);
    auto take = [&](const std::string& key, num::Tensor& dst) {
      auto it = raw.find(key);
      if (it == raw.end()) throw FormatError("checkpoint: missing optimizer state " + key);
      if (it->second.shape() != e.value.shape()) {
        throw FormatError("checkpoint: shape mismatch for " + key);
      }
      dst = it->second;
    };
    take(name + ".m", e.adam_m);
    take(name + ".v", e.adam_v);
  }
  auto step = raw.find(kStepEntry);
  if (step == raw.end() || step->second.size() != 1) {
    throw FormatError("checkpoint: missing optimizer.step");
  }
  ps.set_step_count(static_cast<std::uint64_t>(step->second[0]));
  return ps;
}

num::ParamStore load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path.string());
  return read(is);
}

}  // namespace farm::checkpoint
