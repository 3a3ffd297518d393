// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>

#include "farm/numerics/param_store.hpp"

namespace farm::checkpoint {

inline constexpr char kMagic[8] = {'F', 'A', 'R', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr const char* kStepEntry = "optimizer.step";

// Binary layout: magic, u32 version, u32 entry count, then per entry a
// u32-length-prefixed UTF-8 name, u32 rank, rank x u32 dims and the raw
// little-endian doubles. Each parameter is followed by "<name>.m" and
// "<name>.v"; the step count is stored as a one-element "optimizer.step".
void write(std::ostream& os, const num::ParamStore& params);
void save(const std::filesystem::path& path, const num::ParamStore& params);

num::ParamStore read(std::istream& is);
num::ParamStore load(const std::filesystem::path& path);

}  // namespace farm::checkpoint
