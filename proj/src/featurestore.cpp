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

#include "hsfm/featurestore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hsfm/errors.hpp"

namespace hsfm {

namespace io {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffu));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | bytes[offset + static_cast<std::size_t>(i)];
  }
  return v;
}

float get_f32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return std::bit_cast<float>(get_u32(bytes, offset));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace io

FeatureDataset::FeatureDataset(FeatureMatrix features,
                               std::vector<std::uint32_t> labels,
                               std::vector<std::uint32_t> groups,
                               std::uint32_t class_count,
                               std::uint32_t group_count)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      groups_(std::move(groups)),
      class_count_(class_count),
      group_count_(group_count) {
  if (features_.cols() < 1) throw ValidationError("feature dim must be >= 1");
  if (class_count_ < 2) throw ValidationError("class count must be >= 2");
  if (group_count_ < 1) throw ValidationError("group count must be >= 1");
  const auto n = static_cast<std::size_t>(features_.rows());
  if (labels_.size() != n || groups_.size() != n) {
    throw ShapeError("dataset has " + std::to_string(n) + " feature rows, " +
                     std::to_string(labels_.size()) + " labels and " +
                     std::to_string(groups_.size()) + " groups");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_[i] >= class_count_) {
      throw ValidationError("row " + std::to_string(i) + ": label " +
                            std::to_string(labels_[i]) + " >= class count " +
                            std::to_string(class_count_));
    }
    if (groups_[i] >= group_count_) {
      throw ValidationError("row " + std::to_string(i) + ": group " +
                            std::to_string(groups_[i]) + " >= group count " +
                            std::to_string(group_count_));
    }
  }
  for (Eigen::Index r = 0; r < features_.rows(); ++r) {
    for (Eigen::Index c = 0; c < features_.cols(); ++c) {
      if (!std::isfinite(features_(r, c))) {
        throw ValidationError("row " + std::to_string(r) +
                              ": non-finite feature at column " +
                              std::to_string(c));
      }
    }
  }
}

FeatureDataset FeatureDataset::empty(std::uint32_t dim,
                                     std::uint32_t class_count,
                                     std::uint32_t group_count) {
  return FeatureDataset(FeatureMatrix(0, dim), {}, {}, class_count,
                        group_count);
}

FeatureDataset FeatureDataset::select_rows(
    std::span<const std::size_t> rows) const {
  FeatureMatrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<std::uint32_t> y;
  std::vector<std::uint32_t> g;
  y.reserve(rows.size());
  g.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    if (r >= size()) throw ShapeError("row index out of range");
    f.row(static_cast<Eigen::Index>(k)) =
        features_.row(static_cast<Eigen::Index>(r));
    y.push_back(labels_[r]);
    g.push_back(groups_[r]);
  }
  return FeatureDataset(std::move(f), std::move(y), std::move(g), class_count_,
                        group_count_);
}

bool operator==(const FeatureDataset& a, const FeatureDataset& b) {
  if (a.class_count_ != b.class_count_ || a.group_count_ != b.group_count_ ||
      a.features_.rows() != b.features_.rows() ||
      a.features_.cols() != b.features_.cols() || a.labels_ != b.labels_ ||
      a.groups_ != b.groups_) {
    return false;
  }
  // Bitwise comparison: -0.0f and 0.0f must not compare equal here.
  return std::memcmp(a.features_.data(), b.features_.data(),
                     sizeof(float) * static_cast<std::size_t>(a.features_.size())) == 0;
}

void DatasetSplit::validate() const {
  const auto same = [](const FeatureDataset& a, const FeatureDataset& b) {
    return a.dim() == b.dim() && a.class_count() == b.class_count() &&
           a.group_count() == b.group_count();
  };
  if (!same(train, val) || !same(train, test)) {
    throw ShapeError("train/val/test splits disagree on d, C or G");
  }
}

std::vector<std::uint8_t> encode_features(const FeatureDataset& ds) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + n * d * 4 + n * 8);
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  io::put_u32(out, kFeatureFormatVersion);
  io::put_u32(out, static_cast<std::uint32_t>(n));
  io::put_u32(out, static_cast<std::uint32_t>(d));
  io::put_u32(out, ds.class_count());
  io::put_u32(out, ds.group_count());
  io::put_u32(out, 0);
  io::put_u32(out, 0);
  const float* data = ds.features().data();
  for (std::size_t i = 0; i < n * d; ++i) io::put_f32(out, data[i]);
  for (std::uint32_t y : ds.labels()) io::put_u32(out, y);
  for (std::uint32_t g : ds.groups()) io::put_u32(out, g);
  return out;
}

FeatureDataset decode_features(std::span<const std::uint8_t> bytes,
                               const std::string& source) {
  if (bytes.size() < 4 ||
      std::memcmp(bytes.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    throw MagicError(source + ": not an HSFM-FS file");
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    throw TruncationError(source, kFeatureHeaderBytes, bytes.size());
  }
  const std::uint32_t version = io::get_u32(bytes, 4);
  if (version != kFeatureFormatVersion) {
    throw VersionError(source, version, kFeatureFormatVersion);
  }
  const std::uint64_t n = io::get_u32(bytes, 8);
  const std::uint64_t d = io::get_u32(bytes, 12);
  const std::uint32_t classes = io::get_u32(bytes, 16);
  const std::uint32_t groups = io::get_u32(bytes, 20);
  if (io::get_u32(bytes, 24) != 0 || io::get_u32(bytes, 28) != 0) {
    throw FormatError(source + ": reserved header bytes are not zero");
  }
  if (d == 0) throw FormatError(source + ": header declares d = 0");
  const std::uint64_t row_bytes = d * 4 + 8;
  if (n > (UINT64_MAX - kFeatureHeaderBytes) / row_bytes) {
    throw FormatError(source + ": header declares an impossible payload size");
  }
  const std::uint64_t expected = kFeatureHeaderBytes + n * row_bytes;
  if (bytes.size() < expected) {
    throw TruncationError(source, static_cast<std::size_t>(expected),
                          bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError(source + ": " + std::to_string(bytes.size() - expected) +
                      " trailing bytes after payload");
  }

  FeatureMatrix features(static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(d));
  std::size_t offset = kFeatureHeaderBytes;
  float* data = features.data();
  for (std::uint64_t i = 0; i < n * d; ++i, offset += 4) {
    data[i] = io::get_f32(bytes, offset);
  }
  std::vector<std::uint32_t> labels(n);
  for (auto& y : labels) {
    y = io::get_u32(bytes, offset);
    offset += 4;
  }
  std::vector<std::uint32_t> group_ids(n);
  for (auto& g : group_ids) {
    g = io::get_u32(bytes, offset);
    offset += 4;
  }
  try {
    return FeatureDataset(std::move(features), std::move(labels),
                          std::move(group_ids), classes, groups);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

void write_features(const std::filesystem::path& path,
                    const FeatureDataset& ds) {
  io::write_file(path, encode_features(ds));
}

FeatureDataset read_features(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_features(bytes, path.string());
}

std::vector<std::size_t> group_sizes(const FeatureDataset& ds) {
  std::vector<std::size_t> counts(ds.group_count(), 0);
  for (std::uint32_t g : ds.groups()) ++counts[g];
  return counts;
}

std::vector<std::size_t> class_sizes(const FeatureDataset& ds) {
  std::vector<std::size_t> counts(ds.class_count(), 0);
  for (std::uint32_t y : ds.labels()) ++counts[y];
  return counts;
}

}  // namespace hsfm
