#pragma once

// Binary container for frozen-encoder features and checkpoints:
//   "CSRFPK1\n" | u32 LE header length | UTF-8 JSON header | payload
// The payload is the concatenation of little-endian float arrays at the
// offsets declared in the header.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/autograd.hpp"

namespace consor {

enum class DType { float32, float64 };

struct PackTensor {
  std::vector<std::int64_t> shape;
  DType dtype = DType::float32;
  /// Held at double precision; float32 entries only ever hold values that
  /// are exactly representable in float32.
  std::vector<double> values;

  std::int64_t element_count() const;
  friend bool operator==(const PackTensor&, const PackTensor&) = default;
};

class FeaturePackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeaturePack {
  std::string subject_id;
  std::map<std::string, PackTensor> entries;
  nlohmann::json attrs = nlohmann::json::object();

  /// Stores a 2-D matrix, rounding to float32 when requested.
  void put(const std::string& tag, const Mat& m, DType dtype = DType::float32);
  void put_vector(const std::string& tag, const Eigen::VectorXd& v, DType dtype = DType::float32);
  bool has(const std::string& tag) const { return entries.count(tag) != 0; }
  /// Entry as a matrix; 1-D entries come back as [1, n].
  Mat matrix(const std::string& tag) const;
  Eigen::VectorXd vector(const std::string& tag) const;

  friend bool operator==(const FeaturePack&, const FeaturePack&) = default;
};

std::vector<std::uint8_t> encode_feature_pack(const FeaturePack& pack);
FeaturePack decode_feature_pack(const std::vector<std::uint8_t>& bytes);

void write_feature_pack(const FeaturePack& pack, const std::filesystem::path& path);
FeaturePack read_feature_pack(const std::filesystem::path& path);

}  // namespace consor
