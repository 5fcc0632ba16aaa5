#pragma once

// Checkpoint container: magic "SSTC", u32 version, u64 meta length, meta JSON
// (config, seed, kind, anything the caller embeds), then named float32
// tensors. A checkpoint is identified by the FNV-1a hash of its bytes.

#include "sst/nn/modules.hpp"

#include <filesystem>
#include <string>

#include "json.hpp"

namespace sst::nn {

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const ParamStore<float>& ps);

// Reads meta only.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

// Loads tensors into an existing store; names and shapes must match.
nlohmann::json read_checkpoint(const std::filesystem::path& path, ParamStore<float>& ps);

// FNV-1a over the file bytes, hex encoded.
std::string checkpoint_fingerprint(const std::filesystem::path& path);

}  // namespace sst::nn
