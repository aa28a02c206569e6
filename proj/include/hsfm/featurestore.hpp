// Copyright 2026 The HSFM Authors. All Rights Reserved.
//
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

#ifndef HSFM_FEATURESTORE_HPP_
#define HSFM_FEATURESTORE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hsfm {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows of (frozen embedding, class label, group id). Immutable after
// construction; the constructor enforces every invariant.
class FeatureDataset {
 public:
  FeatureDataset(FeatureMatrix features, std::vector<std::uint32_t> labels,
                 std::vector<std::uint32_t> groups, std::uint32_t class_count,
                 std::uint32_t group_count);

  // Empty dataset with the given shape.
  static FeatureDataset empty(std::uint32_t dim, std::uint32_t class_count,
                              std::uint32_t group_count);

  std::size_t size() const { return labels_.size(); }
  bool is_empty() const { return labels_.empty(); }
  std::uint32_t dim() const { return static_cast<std::uint32_t>(features_.cols()); }
  std::uint32_t class_count() const { return class_count_; }
  std::uint32_t group_count() const { return group_count_; }

  const FeatureMatrix& features() const { return features_; }
  std::span<const std::uint32_t> labels() const { return labels_; }
  std::span<const std::uint32_t> groups() const { return groups_; }

  // Features widened to double for numerical work.
  Eigen::MatrixXd features_double() const { return features_.cast<double>(); }

  // New dataset made of the given rows, in the given order.
  FeatureDataset select_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const FeatureDataset& a, const FeatureDataset& b);

 private:
  FeatureMatrix features_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint32_t> groups_;
  std::uint32_t class_count_;
  std::uint32_t group_count_;
};

struct DatasetSplit {
  FeatureDataset train;
  FeatureDataset val;
  FeatureDataset test;

  // Throws ShapeError unless all splits share d, C and G.
  void validate() const;
};

inline constexpr char kFeatureMagic[4] = {'H', 'S', 'F', 'M'};
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 32;

// HSFM-FS encoding. Layout (little-endian):
//   0..3 "HSFM", 4..7 version, 8..11 n, 12..15 d, 16..19 C, 20..23 G,
//   24..31 zero; then n*d f32 features row-major, n u32 labels, n u32 groups.
std::vector<std::uint8_t> encode_features(const FeatureDataset& ds);

// `source` names the origin in error messages.
FeatureDataset decode_features(std::span<const std::uint8_t> bytes,
                               const std::string& source = "<memory>");

void write_features(const std::filesystem::path& path, const FeatureDataset& ds);
FeatureDataset read_features(const std::filesystem::path& path);

// Per-group row counts; always G entries summing to n.
std::vector<std::size_t> group_sizes(const FeatureDataset& ds);

// Per-class row counts; always C entries.
std::vector<std::size_t> class_sizes(const FeatureDataset& ds);

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset);
float get_f32(std::span<const std::uint8_t> bytes, std::size_t offset);

}  // namespace io

}  // namespace hsfm

#endif  // HSFM_FEATURESTORE_HPP_
