#pragma once

#include <map>
#include <string>

#include "subdyn/mlp.hpp"

namespace subdyn {

/// Checkpoint container, format SDWT1: 8-byte magic "SDWT0001", u64
/// little-endian JSON header length, UTF-8 JSON header (kind, user metadata,
/// blob names and shapes), then float64 little-endian blobs in declaration
/// order.
class CheckpointWriter {
 public:
  void add(const std::string& name, const MatX& m) { blobs_.emplace_back(name, m); }
  void add(const std::string& name, const VecX& v) { blobs_.emplace_back(name, MatX(v)); }
  void add_mlp(const std::string& prefix, const MlpWeights& w);

  /// meta_json must be a serialized JSON object.
  void write(const std::string& path, const std::string& kind, const std::string& meta_json) const;

 private:
  std::vector<std::pair<std::string, MatX>> blobs_;
};

struct Checkpoint {
  std::string kind;
  std::string meta_json;
  std::map<std::string, MatX> blobs;

  const MatX& mat(const std::string& name) const;
  VecX vec(const std::string& name) const;
  MlpWeights mlp(const std::string& prefix, const MlpSpec& spec) const;
};

Checkpoint read_checkpoint(const std::string& path);

std::string mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const std::string& json_text);

}  // namespace subdyn
