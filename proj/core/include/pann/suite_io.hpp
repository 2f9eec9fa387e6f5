#pragma once

// On-disk suite layout:
//   manifest.json            version, label names, split sizes, T, visible
//                            sets, per-sample file stems, master seed
//   <split>_<idx>.img        "PANN" u32 version u32 H u32 W, H*W f32 LE
//   <split>_<idx>.lab        "PANL" u32 version u32 H u32 W, H*W u8 ids;
//                            partial samples append a ground-truth plane

#include <filesystem>
#include <string>

#include "pann/binary_io.hpp"
#include "pann/phantom.hpp"

namespace pann {

inline constexpr std::uint32_t kSuiteFormatVersion = 1;
inline constexpr Magic kImageMagic{'P', 'A', 'N', 'N'};
inline constexpr Magic kLabelMagic{'P', 'A', 'N', 'L'};

Bytes encode_image(const Image& image);
Image decode_image(std::span<const std::uint8_t> bytes, const std::string& source);

Bytes encode_labels(const Sample& sample);
/// Decodes the label planes; `partial` says whether a ground-truth plane
/// must follow the visible one.
std::pair<LabelMap, std::optional<LabelMap>> decode_labels(
    std::span<const std::uint8_t> bytes, bool partial, const std::string& source);

std::string manifest_json(const Suite& suite);

void save_suite(const Suite& suite, const std::filesystem::path& dir);
Suite load_suite(const std::filesystem::path& dir);

/// FNV-1a over the manifest and every sample file, in manifest order.
std::uint64_t suite_fingerprint(const Suite& suite);

}  // namespace pann
