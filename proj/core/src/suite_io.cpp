#include "pann/suite_io.hpp"

#include <nlohmann/json.hpp>

#include "pann/error.hpp"

namespace pann {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_header(ByteWriter& w, const Magic& magic, std::size_t h, std::size_t wd) {
  w.magic(magic);
  w.u32(kSuiteFormatVersion);
  w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(wd));
}

LabelMap read_plane(ByteReader& r, std::size_t h, std::size_t w) {
  LabelMap plane(h, w);
  for (auto& v : plane.values()) v = r.u8();
  return plane;
}

void expect_consumed(const ByteReader& r) {
  if (r.remaining() != 0) {
    fail(ErrorCode::kLengthMismatch, r.source() + ": " +
                                         std::to_string(r.remaining()) +
                                         " trailing bytes");
  }
}

std::string stem(std::string_view split, std::size_t i) {
  return std::string(split) + "_" + std::to_string(i);
}

struct SplitFiles {
  std::string name;
  const std::vector<Sample>* samples;
};

std::vector<SplitFiles> splits_of(const Suite& suite) {
  std::vector<SplitFiles> out{{"full", &suite.full}};
  for (std::size_t t = 0; t < suite.partial.size(); ++t) {
    out.push_back({"partial" + std::to_string(t + 1), &suite.partial[t].samples});
  }
  out.push_back({"test", &suite.test});
  return out;
}

json file_list(std::string_view split, std::size_t n) {
  json files = json::array();
  for (std::size_t i = 0; i < n; ++i) files.push_back(stem(split, i));
  return files;
}

}  // namespace

Bytes encode_image(const Image& image) {
  ByteWriter w;
  write_header(w, kImageMagic, image.height(), image.width());
  for (float v : image.values()) w.f32(v);
  return w.take();
}

Image decode_image(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic(kImageMagic);
  r.expect_version(kSuiteFormatVersion);
  const std::size_t h = r.u32();
  const std::size_t w = r.u32();
  Image image(h, w);
  for (auto& v : image.values()) v = r.f32();
  expect_consumed(r);
  return image;
}

Bytes encode_labels(const Sample& sample) {
  ByteWriter w;
  write_header(w, kLabelMagic, sample.height(), sample.width());
  for (ClassId v : sample.labels().values()) w.u8(v);
  if (sample.is_partial()) {
    for (ClassId v : sample.evaluation_truth().values()) w.u8(v);
  }
  return w.take();
}

std::pair<LabelMap, std::optional<LabelMap>> decode_labels(
    std::span<const std::uint8_t> bytes, bool partial, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic(kLabelMagic);
  r.expect_version(kSuiteFormatVersion);
  const std::size_t h = r.u32();
  const std::size_t w = r.u32();
  LabelMap visible = read_plane(r, h, w);
  std::optional<LabelMap> hidden;
  if (partial) hidden = read_plane(r, h, w);
  expect_consumed(r);
  return {std::move(visible), std::move(hidden)};
}

std::string manifest_json(const Suite& suite) {
  json m;
  m["version"] = kSuiteFormatVersion;
  m["master_seed"] = suite.master_seed;
  m["label_space"] = suite.label_space.organ_names();
  m["T"] = suite.partial.size();
  m["splits"] = {
      {"full", {{"count", suite.full.size()},
                {"files", file_list("full", suite.full.size())}}},
      {"test", {{"count", suite.test.size()},
                {"files", file_list("test", suite.test.size())}}},
  };
  json partial = json::array();
  for (std::size_t t = 0; t < suite.partial.size(); ++t) {
    const auto& split = suite.partial[t];
    const std::string name = "partial" + std::to_string(t + 1);
    partial.push_back({{"t", t + 1},
                       {"visible", split.visible.visible()},
                       {"count", split.samples.size()},
                       {"files", file_list(name, split.samples.size())}});
  }
  m["partial"] = std::move(partial);
  return m.dump(2) + "\n";
}

void save_suite(const Suite& suite, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  write_text_file(dir / "manifest.json", manifest_json(suite));
  for (const auto& split : splits_of(suite)) {
    for (std::size_t i = 0; i < split.samples->size(); ++i) {
      const Sample& s = (*split.samples)[i];
      const std::string base = stem(split.name, i);
      write_file(dir / (base + ".img"), encode_image(s.image()));
      write_file(dir / (base + ".lab"), encode_labels(s));
    }
  }
}

namespace {

std::vector<std::string> manifest_files(const json& node, const std::string& what) {
  if (!node.contains("files") || !node.contains("count")) {
    fail(ErrorCode::kManifestMismatch, "manifest split " + what +
                                           " lacks files/count");
  }
  auto files = node.at("files").get<std::vector<std::string>>();
  if (files.size() != node.at("count").get<std::size_t>()) {
    fail(ErrorCode::kManifestMismatch,
         "manifest split " + what + " count disagrees with its file list");
  }
  return files;
}

void check_label_range(const LabelMap& labels, const LabelSpace& space,
                       const PartialLabelSet* visible, const std::string& source) {
  for (ClassId c : labels.values()) {
    const bool ok = visible ? (c == kBackground || visible->contains(c))
                            : c < space.num_classes();
    if (!ok) {
      fail(ErrorCode::kManifestMismatch,
           source + ": label " + std::to_string(c) + " not allowed by the manifest");
    }
  }
}

Sample load_sample(const fs::path& dir, const std::string& base, const LabelSpace& space,
                   std::optional<std::uint32_t> partial_t,
                   const PartialLabelSet* visible = nullptr) {
  for (const char* ext : {".img", ".lab"}) {
    if (!fs::exists(dir / (base + ext))) {
      fail(ErrorCode::kMissingSample, "missing sample file " + base + ext);
    }
  }
  Image image = decode_image(read_file(dir / (base + ".img")), base + ".img");
  auto [labels, hidden] = decode_labels(read_file(dir / (base + ".lab")),
                                        partial_t.has_value(), base + ".lab");
  if (!image.same_shape(labels)) {
    fail(ErrorCode::kManifestMismatch,
         base + ": image and label dimensions differ");
  }
  check_label_range(labels, space, visible, base + ".lab");
  if (hidden) check_label_range(*hidden, space, nullptr, base + ".lab");
  if (partial_t) {
    return Sample::partial(std::move(image), std::move(labels), *partial_t,
                           std::move(*hidden));
  }
  return Sample::full(std::move(image), std::move(labels));
}

}  // namespace

Suite load_suite(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    fail(ErrorCode::kMissingSample, "missing manifest.json in " + dir.string());
  }
  json m;
  try {
    const Bytes raw = read_file(manifest_path);
    m = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestMismatch, std::string("manifest.json: ") + e.what());
  }

  try {
    if (m.at("version").get<std::uint32_t>() != kSuiteFormatVersion) {
      fail(ErrorCode::kVersionMismatch, "manifest.json: unsupported version");
    }
    Suite suite;
    suite.master_seed = m.at("master_seed").get<std::uint64_t>();
    suite.label_space = LabelSpace(m.at("label_space").get<std::vector<std::string>>());

    for (const auto& base : manifest_files(m.at("splits").at("full"), "full")) {
      suite.full.push_back(load_sample(dir, base, suite.label_space, std::nullopt));
    }
    const auto& partial = m.at("partial");
    if (partial.size() != m.at("T").get<std::size_t>()) {
      fail(ErrorCode::kManifestMismatch, "manifest T disagrees with partial list");
    }
    for (std::size_t t = 0; t < partial.size(); ++t) {
      const auto& node = partial[t];
      const auto split_t = static_cast<std::uint32_t>(t + 1);
      if (node.at("t").get<std::uint32_t>() != split_t) {
        fail(ErrorCode::kManifestMismatch, "partial splits out of order");
      }
      PartialSplit split{PartialLabelSet(node.at("visible").get<std::vector<ClassId>>()), {}};
      split.visible.validate_against(suite.label_space);
      for (const auto& base : manifest_files(node, "partial" + std::to_string(split_t))) {
        split.samples.push_back(
            load_sample(dir, base, suite.label_space, split_t, &split.visible));
      }
      suite.partial.push_back(std::move(split));
    }
    for (const auto& base : manifest_files(m.at("splits").at("test"), "test")) {
      suite.test.push_back(load_sample(dir, base, suite.label_space, std::nullopt));
    }
    return suite;
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestMismatch, std::string("manifest.json: ") + e.what());
  }
}

std::uint64_t suite_fingerprint(const Suite& suite) {
  const std::string manifest = manifest_json(suite);
  std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(manifest.data()),
                             manifest.size()});
  for (const auto& split : splits_of(suite)) {
    for (const auto& s : *split.samples) {
      h = fnv1a64(encode_image(s.image()), h);
      h = fnv1a64(encode_labels(s), h);
    }
  }
  return h;
}

}  // namespace pann
