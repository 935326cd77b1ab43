#include "consor/feature_pack.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace consor {
namespace {

constexpr char kMagic[] = "CSRFPK1\n";
constexpr std::size_t kMagicLen = 8;

std::size_t dtype_size(DType d) { return d == DType::float32 ? 4 : 8; }
const char* dtype_name(DType d) { return d == DType::float32 ? "float32" : "float64"; }

DType parse_dtype(const std::string& s) {
  if (s == "float32") return DType::float32;
  if (s == "float64") return DType::float64;
  throw FeaturePackError("feature pack: unsupported dtype '" + s + "'");
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T read_le(const std::uint8_t* p) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::int64_t PackTensor::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void FeaturePack::put(const std::string& tag, const Mat& m, DType dtype) {
  PackTensor t;
  t.shape = {m.rows(), m.cols()};
  t.dtype = dtype;
  t.values.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0, k = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c, ++k) {
      double v = m(r, c);
      t.values[static_cast<std::size_t>(k)] = dtype == DType::float32 ? static_cast<double>(static_cast<float>(v)) : v;
    }
  }
  entries[tag] = std::move(t);
}

void FeaturePack::put_vector(const std::string& tag, const Eigen::VectorXd& v, DType dtype) {
  put(tag, v.transpose(), dtype);
  entries[tag].shape = {v.size()};
}

Mat FeaturePack::matrix(const std::string& tag) const {
  auto it = entries.find(tag);
  if (it == entries.end()) throw FeaturePackError("feature pack '" + subject_id + "' has no entry '" + tag + "'");
  const PackTensor& t = it->second;
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  if (t.shape.size() == 1) {
    cols = t.shape[0];
  } else if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else {
    throw FeaturePackError("feature pack entry '" + tag + "' is not 1-D or 2-D");
  }
  Mat m(rows, cols);
  std::copy(t.values.begin(), t.values.end(), m.data());
  return m;
}

Eigen::VectorXd FeaturePack::vector(const std::string& tag) const {
  Mat m = matrix(tag);
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

std::vector<std::uint8_t> encode_feature_pack(const FeaturePack& pack) {
  if (pack.entries.empty()) throw FeaturePackError("feature pack '" + pack.subject_id + "' has no entries");
  nlohmann::json entries = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [tag, t] : pack.entries) {
    if (t.element_count() != static_cast<std::int64_t>(t.values.size())) {
      throw FeaturePackError("feature pack entry '" + tag + "': shape does not match value count");
    }
    const std::uint64_t nbytes = t.values.size() * dtype_size(t.dtype);
    entries[tag] = {{"shape", t.shape}, {"dtype", dtype_name(t.dtype)}, {"offset", offset}, {"nbytes", nbytes}};
    offset += nbytes;
  }
  nlohmann::json header = {{"subject_id", pack.subject_id}, {"entries", entries}, {"attrs", pack.attrs}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kMagicLen + 4 + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + kMagicLen);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [tag, t] : pack.entries) {
    for (double v : t.values) {
      if (t.dtype == DType::float32) {
        append_le<float>(out, static_cast<float>(v));
      } else {
        append_le<double>(out, v);
      }
    }
  }
  return out;
}

FeaturePack decode_feature_pack(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FeaturePackError("feature pack: bad magic");
  }
  const std::uint32_t header_len = read_le<std::uint32_t>(bytes.data() + kMagicLen);
  const std::size_t payload_start = kMagicLen + 4 + static_cast<std::size_t>(header_len);
  if (payload_start > bytes.size()) throw FeaturePackError("feature pack: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kMagicLen + 4, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
  } catch (const nlohmann::json::parse_error& e) {
    throw FeaturePackError(std::string("feature pack: corrupt header: ") + e.what());
  }

  FeaturePack pack;
  const std::size_t payload_len = bytes.size() - payload_start;
  try {
    pack.subject_id = header.at("subject_id").get<std::string>();
    if (header.contains("attrs")) pack.attrs = header.at("attrs");
    std::uint64_t covered = 0;
    for (const auto& [tag, e] : header.at("entries").items()) {
      PackTensor t;
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      t.dtype = parse_dtype(e.at("dtype").get<std::string>());
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      for (auto d : t.shape) {
        if (d < 0) throw FeaturePackError("feature pack entry '" + tag + "': negative dimension");
      }
      const auto count = static_cast<std::uint64_t>(t.element_count());
      if (count * dtype_size(t.dtype) != nbytes) {
        throw FeaturePackError("feature pack entry '" + tag + "': shape/size mismatch");
      }
      if (offset > payload_len || nbytes > payload_len - offset) {
        throw FeaturePackError("feature pack entry '" + tag + "': payload truncated");
      }
      t.values.resize(count);
      const std::uint8_t* base = bytes.data() + payload_start + offset;
      for (std::uint64_t k = 0; k < count; ++k) {
        t.values[k] = t.dtype == DType::float32
                          ? static_cast<double>(read_le<float>(base + 4 * k))
                          : read_le<double>(base + 8 * k);
      }
      covered += nbytes;
      pack.entries.emplace(tag, std::move(t));
    }
    if (covered != payload_len) {
      throw FeaturePackError("feature pack: payload length " + std::to_string(payload_len) +
                             " does not match declared " + std::to_string(covered));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FeaturePackError(std::string("feature pack: malformed header: ") + e.what());
  }
  return pack;
}

void write_feature_pack(const FeaturePack& pack, const std::filesystem::path& path) {
  const auto bytes = encode_feature_pack(pack);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeaturePackError("cannot write feature pack " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FeaturePackError("failed writing feature pack " + path.string());
}

FeaturePack read_feature_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeaturePackError("cannot open feature pack " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_pack(bytes);
}

}  // namespace consor
