// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Multi-view dataset model and its on-disk formats.
//
// A view file (MVCV) is a little-endian binary matrix:
//
//   bytes  0..3   magic "MVCV"
//   bytes  4..5   version (u16, = 1)
//   bytes  6..7   reserved, zero
//   bytes  8..15  n, row count (u64)
//   bytes 16..23  d, column count (u64)
//   bytes 24..    n*d float32 values, row-major
//
// Values are float32 on disk and double in memory. Labels live in a separate
// UTF-8 text file, one token per line. A JSON manifest ties views and labels
// together; relative paths in it resolve against the manifest's directory.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmvc/common.hpp"

namespace dmvc {

namespace fs = std::filesystem;

struct FeatureView {
  std::string name;
  Matrix data;  // n x d, rows are samples

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }
};

// Throws ConfigError naming the first non-finite entry.
inline void check_finite(const Matrix& m, const std::string& what = "matrix") {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        fail_config(what, ": non-finite value at (", i, ",", j, ")");
}

inline void validate_view(const FeatureView& v) {
  if (v.rows() < 1 || v.cols() < 1)
    fail_config("view '", v.name, "' must have at least one row and one column");
  check_finite(v.data, "view '" + v.name + "'");
}

class Partition {
 public:
  Partition() = default;

  Partition(std::vector<std::size_t> assignments, std::size_t k)
      : assignments_(std::move(assignments)), k_(k) {
    if (k_ < 1) fail_config("partition needs k >= 1");
    if (k_ > assignments_.size() && !assignments_.empty())
      fail_config("partition has k=", k_, " > n=", assignments_.size());
    for (std::size_t i = 0; i < assignments_.size(); ++i)
      if (assignments_[i] >= k_)
        fail_config("assignment ", assignments_[i], " at sample ", i, " is not below k=", k_);
  }

  // k taken as one past the largest label.
  static Partition from_labels(std::vector<std::size_t> labels) {
    std::size_t k = 0;
    for (auto a : labels) k = std::max(k, a + 1);
    return Partition(std::move(labels), std::max<std::size_t>(k, 1));
  }

  const std::vector<std::size_t>& assignments() const { return assignments_; }
  std::size_t k() const { return k_; }
  std::size_t size() const { return assignments_.size(); }
  std::size_t operator[](std::size_t i) const { return assignments_[i]; }

  // Labels renumbered in order of first appearance, for comparison up to
  // relabeling.
  Partition canonical() const {
    std::vector<std::size_t> map(k_, k_);
    std::vector<std::size_t> out(assignments_.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < assignments_.size(); ++i) {
      auto& m = map[assignments_[i]];
      if (m == k_) m = next++;
      out[i] = m;
    }
    return Partition(std::move(out), std::max<std::size_t>(next, 1));
  }

  bool operator==(const Partition&) const = default;

 private:
  std::vector<std::size_t> assignments_;
  std::size_t k_ = 1;
};

struct MultiViewDataset {
  std::string name;
  std::vector<FeatureView> views;
  std::optional<Partition> labels;
  std::vector<std::string> label_names;  // token for each dense label id
  std::vector<std::string> sample_ids;

  std::size_t num_views() const { return views.size(); }
  Index num_samples() const { return views.empty() ? 0 : views.front().rows(); }

  const FeatureView& view(const std::string& view_name) const {
    for (const auto& v : views)
      if (v.name == view_name) return v;
    fail_config("no view named '", view_name, "' in dataset '", name, "'");
  }

  std::vector<Matrix> matrices() const {
    std::vector<Matrix> out;
    out.reserve(views.size());
    for (const auto& v : views) out.push_back(v.data);
    return out;
  }
};

inline void validate_dataset(const MultiViewDataset& ds) {
  if (ds.views.empty()) fail_config("dataset '", ds.name, "' has no views");
  std::set<std::string> names;
  for (const auto& v : ds.views) {
    validate_view(v);
    if (!names.insert(v.name).second) fail_config("duplicate view name '", v.name, "'");
  }
  const auto& first = ds.views.front();
  for (const auto& v : ds.views)
    if (v.rows() != first.rows())
      fail_config("sample count mismatch: ", first.name, "=", first.rows(), " ", v.name, "=", v.rows());
  if (ds.labels && static_cast<Index>(ds.labels->size()) != first.rows())
    fail_config("label count ", ds.labels->size(), " does not match sample count ", first.rows());
  if (!ds.sample_ids.empty() && static_cast<Index>(ds.sample_ids.size()) != first.rows())
    fail_config("sample id count ", ds.sample_ids.size(), " does not match sample count ", first.rows());
}

// ---------------------------------------------------------------------------
// MVCV view files

inline constexpr std::array<char, 4> kViewMagic = {'M', 'V', 'C', 'V'};
inline constexpr std::uint16_t kViewVersion = 1;
inline constexpr std::size_t kViewHeaderSize = 24;

namespace detail {

template <typename UInt>
void put_le(std::string& buf, UInt v) {
  for (std::size_t b = 0; b < sizeof(UInt); ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename UInt>
UInt get_le(const unsigned char* p) {
  UInt v = 0;
  for (std::size_t b = 0; b < sizeof(UInt); ++b) v |= static_cast<UInt>(p[b]) << (8 * b);
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string encode_view(const Matrix& data) {
  std::string buf;
  buf.reserve(kViewHeaderSize + static_cast<std::size_t>(data.size()) * 4);
  buf.append(kViewMagic.data(), kViewMagic.size());
  detail::put_le<std::uint16_t>(buf, kViewVersion);
  detail::put_le<std::uint16_t>(buf, 0);
  detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(data.rows()));
  detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(data.cols()));
  for (Index i = 0; i < data.rows(); ++i)
    for (Index j = 0; j < data.cols(); ++j) {
      const auto f = static_cast<float>(data(i, j));
      if (!std::isfinite(data(i, j)) || !std::isfinite(f))
        fail_config("non-finite value at (", i, ",", j, ")");
      detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(f));
    }
  return buf;
}

inline Matrix decode_view(const std::string& bytes) {
  if (bytes.size() < kViewHeaderSize || !std::equal(kViewMagic.begin(), kViewMagic.end(), bytes.begin()))
    throw IoError("unrecognized format");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  if (version != kViewVersion) throw IoError("unsupported MVCV version " + std::to_string(version));
  const auto n = detail::get_le<std::uint64_t>(p + 8);
  const auto d = detail::get_le<std::uint64_t>(p + 16);
  if (n == 0 || d == 0) throw IoError("empty view in header");
  const std::size_t payload = bytes.size() - kViewHeaderSize;
  if (d > payload / 4 / n) throw IoError("truncated payload");
  if (payload != n * d * 4) throw IoError("payload size does not match header shape");
  Matrix m(static_cast<Index>(n), static_cast<Index>(d));
  const unsigned char* q = p + kViewHeaderSize;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j, q += 4) {
      const float f = std::bit_cast<float>(detail::get_le<std::uint32_t>(q));
      if (!std::isfinite(f)) throw IoError(detail::concat("non-finite value at (", i, ",", j, ")"));
      m(i, j) = f;
    }
  return m;
}

// Narrows to float32. Rejects values that are, or become, non-finite.
inline void save_view(const FeatureView& view, const fs::path& path) {
  detail::write_file(path, encode_view(view.data));
}

inline FeatureView load_view(const fs::path& path, std::string name = {}) {
  if (name.empty()) name = path.stem().string();
  FeatureView v{std::move(name), {}};
  try {
    v.data = decode_view(detail::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Labels

struct LabelSet {
  Partition partition;
  std::vector<std::string> names;
};

inline LabelSet parse_labels(const std::string& text) {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> names;
  std::vector<std::size_t> labels;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto [it, inserted] = ids.try_emplace(line, names.size());
    if (inserted) names.push_back(line);
    labels.push_back(it->second);
  }
  if (labels.empty()) fail_config("labels file is empty");
  return {Partition(std::move(labels), names.size()), std::move(names)};
}

inline LabelSet load_labels(const fs::path& path) {
  try {
    return parse_labels(detail::read_file(path));
  } catch (const ConfigError& e) {
    fail_config(path.string(), ": ", e.what());
  }
}

inline void save_labels(const Partition& labels, const std::vector<std::string>& names, const fs::path& path) {
  std::string out;
  for (auto a : labels.assignments()) {
    out += names.empty() ? std::to_string(a) : names.at(a);
    out += '\n';
  }
  detail::write_file(path, out);
}

// One cluster id per line.
inline void save_partition(const Partition& p, const fs::path& path) {
  std::string out;
  for (auto a : p.assignments()) {
    out += std::to_string(a);
    out += '\n';
  }
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestView {
  std::string name;
  std::string path;
  std::optional<std::uint64_t> n;
  std::optional<std::uint64_t> d;
};

struct Manifest {
  std::string name;
  std::vector<ManifestView> views;
  std::optional<std::string> labels_path;
  Seed seed = 0;
  nlohmann::json methods = nlohmann::json::object();
  fs::path base_dir;  // where relative paths resolve; not serialized

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline Manifest parse_manifest(const nlohmann::json& j, fs::path base_dir = {}) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  try {
    m.name = j.value("name", std::string("dataset"));
    for (const auto& v : j.at("views")) {
      ManifestView mv;
      mv.path = v.at("path").get<std::string>();
      mv.name = v.value("name", fs::path(mv.path).stem().string());
      if (v.contains("n")) mv.n = v.at("n").get<std::uint64_t>();
      if (v.contains("d")) mv.d = v.at("d").get<std::uint64_t>();
      m.views.push_back(std::move(mv));
    }
    if (j.contains("labels_path") && !j.at("labels_path").is_null())
      m.labels_path = j.at("labels_path").get<std::string>();
    m.seed = j.value("seed", Seed{0});
    if (j.contains("methods")) m.methods = j.at("methods");
  } catch (const nlohmann::json::exception& e) {
    fail_config("malformed manifest: ", e.what());
  }
  if (m.views.empty()) fail_config("manifest lists no views");
  return m;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["name"] = m.name;
  j["views"] = nlohmann::json::array();
  for (const auto& v : m.views) {
    nlohmann::json jv{{"name", v.name}, {"path", v.path}};
    if (v.n) jv["n"] = *v.n;
    if (v.d) jv["d"] = *v.d;
    j["views"].push_back(std::move(jv));
  }
  if (m.labels_path) j["labels_path"] = *m.labels_path;
  j["seed"] = m.seed;
  j["methods"] = m.methods;
  return j;
}

inline Manifest load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail_config(path.string(), ": ", e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline void save_manifest(const Manifest& m, const fs::path& path) {
  detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

inline MultiViewDataset load_dataset(const Manifest& manifest) {
  MultiViewDataset ds;
  ds.name = manifest.name;
  for (const auto& mv : manifest.views) {
    const auto path = manifest.resolve(mv.path);
    if (!fs::exists(path)) throw IoError("missing view file '" + path.string() + "'");
    auto view = load_view(path, mv.name);
    if ((mv.n && *mv.n != static_cast<std::uint64_t>(view.rows())) ||
        (mv.d && *mv.d != static_cast<std::uint64_t>(view.cols())))
      fail_config("view '", mv.name, "' has shape ", view.rows(), "x", view.cols(),
                  " but the manifest declares ", mv.n.value_or(view.rows()), "x", mv.d.value_or(view.cols()));
    ds.views.push_back(std::move(view));
  }
  if (manifest.labels_path) {
    const auto path = manifest.resolve(*manifest.labels_path);
    if (!fs::exists(path)) throw IoError("missing labels file '" + path.string() + "'");
    auto ls = load_labels(path);
    ds.labels = std::move(ls.partition);
    ds.label_names = std::move(ls.names);
  }
  validate_dataset(ds);
  return ds;
}

inline MultiViewDataset load_dataset(const fs::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

}  // namespace dmvc
