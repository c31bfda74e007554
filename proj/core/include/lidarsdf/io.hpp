#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lidarsdf/sdf.hpp"

namespace lidarsdf {

/// Current value of the `format_version` field in every JSON document.
inline constexpr const char* kFormatVersion = "1";

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Row-major float64 little-endian payload, base64 encoded.
std::string encode_doubles(const std::vector<double>& values);
std::vector<double> decode_doubles(std::string_view text);

/// {format_version, kind, d_z, parameters...}
std::string decoder_to_json(const SdfDecoder& decoder);
std::unique_ptr<SdfDecoder> decoder_from_json(const std::string& text);

std::string pca_to_json(const PcaSubspace& pca);
PcaSubspace pca_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lidarsdf
