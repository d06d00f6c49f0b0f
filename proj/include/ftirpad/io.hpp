#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ftirpad/calibration.hpp"
#include "ftirpad/dataset.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/lbp.hpp"
#include "ftirpad/svm.hpp"

namespace ftirpad {

inline constexpr int kFeatureFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kTransformFormatVersion = 1;
inline constexpr std::array<char, 8> kFeatureMagic{'F', 'T', 'P', 'D', 'F', 'E', 'A', 'T'};

// ---------------------------------------------------------------- hashing

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw DataError("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_binary_file(path)); }

// ---------------------------------------------------------------- features

/// Rows of one descriptor kind, each tied to a manifest sample.
struct FeatureTable {
  DescriptorKind kind = DescriptorKind::Lbp;
  std::size_t dim = 0;
  std::vector<std::string> samples;  // manifest sample key per row
  std::vector<bool> capture_accepted;
  FeatureRows rows;
  json meta = json::object();  // view, descriptor sizes, manifest path
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b) out += static_cast<char>((u >> (8 * b)) & 0xFF);
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw DataError("feature file truncated");
  U u = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) u |= static_cast<U>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += sizeof(U);
  return std::bit_cast<T>(u);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) { return p.string() + ".json"; }

}  // namespace detail

/// Binary matrix (header + little-endian doubles) plus a JSON sidecar
/// `<path>.json` that maps rows to manifest samples.
inline void write_features(const std::filesystem::path& path, const FeatureTable& t) {
  if (t.rows.size() != t.samples.size() || t.capture_accepted.size() != t.rows.size())
    throw DataError("feature table: row, sample and gate lists differ in length");
  std::string bin(kFeatureMagic.begin(), kFeatureMagic.end());
  detail::put_le(bin, static_cast<std::uint32_t>(kFeatureFormatVersion));
  detail::put_le(bin, static_cast<std::uint32_t>(t.kind));
  detail::put_le(bin, static_cast<std::uint64_t>(t.dim));
  detail::put_le(bin, static_cast<std::uint64_t>(t.rows.size()));
  for (const auto& r : t.rows) {
    if (r.size() != t.dim) throw DataError("feature table: row length differs from dim");
    for (double v : r) detail::put_le(bin, v);
  }
  write_text_file(path, bin);

  json index = t.meta;
  index["format_version"] = kFeatureFormatVersion;
  index["descriptor_kind"] = to_string(t.kind);
  index["dim"] = t.dim;
  index["count"] = t.rows.size();
  json rows = json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    rows.push_back({{"row", i}, {"sample", t.samples[i]}, {"capture_accepted", bool(t.capture_accepted[i])}});
  index["rows"] = rows;
  write_text_file(detail::sidecar_path(path), index.dump(2) + "\n");
}

inline FeatureTable read_features(const std::filesystem::path& path) {
  const std::string bin = read_binary_file(path);
  if (bin.size() < 32 || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bin.begin()))
    throw DataError("'" + path.string() + "' is not a feature file");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(bin, pos);
  if (version != kFeatureFormatVersion) throw DataError("feature file: unsupported format_version");
  FeatureTable t;
  const auto kind = detail::get_le<std::uint32_t>(bin, pos);
  if (kind < 1 || kind > 3) throw DataError("feature file: unknown descriptor kind");
  t.kind = static_cast<DescriptorKind>(kind);
  t.dim = detail::get_le<std::uint64_t>(bin, pos);
  const auto count = detail::get_le<std::uint64_t>(bin, pos);
  if (bin.size() != pos + count * t.dim * 8) throw DataError("feature file: size does not match header");
  t.rows.assign(count, std::vector<double>(t.dim));
  for (auto& r : t.rows)
    for (double& v : r) v = detail::get_le<double>(bin, pos);

  const json index = read_json_file(detail::sidecar_path(path));
  try {
    if (index.at("count").get<std::uint64_t>() != count || index.at("dim").get<std::uint64_t>() != t.dim)
      throw DataError("feature sidecar disagrees with binary header");
    for (const auto& r : index.at("rows")) {
      t.samples.push_back(r.at("sample").get<std::string>());
      t.capture_accepted.push_back(r.value("capture_accepted", true));
    }
    if (t.samples.size() != count) throw DataError("feature sidecar row count mismatch");
    t.meta = index;
    for (const char* k : {"rows", "format_version", "descriptor_kind", "dim", "count"}) t.meta.erase(k);
  } catch (const json::exception& e) {
    throw DataError(std::string("feature sidecar: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------- models

inline json to_json(const LinearSvmModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"feature_kind", to_string(m.feature_kind)},
          {"dim", m.dim()},
          {"C", m.C},
          {"seed", m.train_seed},
          {"bias", m.bias},
          {"weights", m.weights},
          {"train_score_mean", m.train_score_mean},
          {"train_score_std", m.train_score_std},
          {"converged", m.converged},
          {"objective_value", m.objective_value},
          {"iterations", m.iterations}};
}

inline LinearSvmModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw DataError("model: unsupported format_version");
    LinearSvmModel m;
    m.feature_kind = descriptor_kind_from_string(j.at("feature_kind").get<std::string>());
    m.C = j.at("C").get<double>();
    m.train_seed = j.at("seed").get<std::uint64_t>();
    m.bias = j.at("bias").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    if (j.at("dim").get<std::size_t>() != m.weights.size()) throw DataError("model: dim disagrees with weights");
    m.train_score_mean = j.at("train_score_mean").get<double>();
    m.train_score_std = j.at("train_score_std").get<double>();
    m.converged = j.at("converged").get<bool>();
    m.objective_value = j.value("objective_value", 0.0);
    m.iterations = j.value("iterations", std::uint64_t{0});
    if (!(m.C > 0)) throw DataError("model: C must be positive");
    for (double w : m.weights)
      if (!std::isfinite(w)) throw DataError("model: non-finite weight");
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

/// Canonical serialized form; hashes of models are taken over this text.
inline std::string model_text(const LinearSvmModel& m) { return to_json(m).dump(2) + "\n"; }

inline void save_model(const LinearSvmModel& m, const std::filesystem::path& path) { write_text_file(path, model_text(m)); }

inline LinearSvmModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

// ---------------------------------------------------------------- calibration files

inline json to_json(const Correspondences& pairs) {
  json out = json::array();
  for (const auto& c : pairs) out.push_back({{"src", {c.src.x, c.src.y}}, {"dst", {c.dst.x, c.dst.y}}});
  return out;
}

inline Correspondences correspondences_from_json(const json& j) {
  try {
    Correspondences out;
    for (const auto& e : j) {
      const auto s = e.at("src").get<std::vector<double>>();
      const auto d = e.at("dst").get<std::vector<double>>();
      if (s.size() != 2 || d.size() != 2) throw DataError("correspondence points must be [x, y]");
      out.push_back({{s[0], s[1]}, {d[0], d[1]}});
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("correspondences: ") + e.what());
  }
}

inline json to_json(const PerspectiveEstimate& e) {
  const auto& p = e.transform.params();
  return {{"format_version", kTransformFormatVersion},
          {"params", std::vector<double>(p.begin(), p.end())},
          {"residual_rms_px", e.residual.rms_px},
          {"residual_max_px", e.residual.max_px}};
}

inline PerspectiveTransform transform_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kTransformFormatVersion)
      throw DataError("transform: unsupported format_version");
    const auto v = j.at("params").get<std::vector<double>>();
    if (v.size() != 8) throw DataError("transform: expected 8 parameters");
    PerspectiveTransform::Params p{};
    std::copy(v.begin(), v.end(), p.begin());
    return PerspectiveTransform(p);
  } catch (const json::exception& e) {
    throw DataError(std::string("transform: ") + e.what());
  }
}

inline json to_json(const ResolutionMap& m) {
  json cells = json::array();
  for (const auto& c : m.cells)
    cells.push_back({{"col", c.col}, {"row", c.row}, {"center", {c.center_px.x, c.center_px.y}}, {"ppi_x", c.ppi_x},
                     {"ppi_y", c.ppi_y}});
  return {{"cols", m.cols},           {"rows", m.rows},           {"min_ppi_x", m.min_ppi_x}, {"max_ppi_x", m.max_ppi_x},
          {"min_ppi_y", m.min_ppi_y}, {"max_ppi_y", m.max_ppi_y}, {"cells", cells}};
}

}  // namespace ftirpad
