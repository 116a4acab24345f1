#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascade/tensor.hpp"

namespace cascade::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Little-endian float32 blob, no header.
void write_f32(const fs::path& path, std::span<const float> values);
std::vector<float> read_f32(const fs::path& path);

void write_json(const fs::path& path, const json& value);
json read_json(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// 8-bit RGB PNG from a {1,3,H,W} tensor in [0,1].
void write_png(const fs::path& path, const Tensor& image);
Tensor read_png(const fs::path& path);

/// Creates the directory tree, mapping failures onto IoError.
void ensure_dir(const fs::path& dir);

/// FNV-1a over a file's bytes, as hex.
std::string file_hash(const fs::path& path);

}  // namespace cascade::io
