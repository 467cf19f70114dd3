#include "subdyn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace subdyn {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'D', 'W', 'T', '0', '0', '0', '1'};

}  // namespace

void CheckpointWriter::add_mlp(const std::string& prefix, const MlpWeights& w) {
  for (size_t i = 0; i < w.dense_w.size(); ++i) {
    add(prefix + ".dense" + std::to_string(i) + ".w", w.dense_w[i]);
    add(prefix + ".dense" + std::to_string(i) + ".b", w.dense_b[i]);
  }
  for (size_t i = 0; i < w.bn_gamma.size(); ++i) {
    const std::string base = prefix + ".bn" + std::to_string(i);
    add(base + ".gamma", w.bn_gamma[i]);
    add(base + ".beta", w.bn_beta[i]);
    add(base + ".run_mean", w.bn_run_mean[i]);
    add(base + ".run_var", w.bn_run_var[i]);
  }
}

void CheckpointWriter::write(const std::string& path, const std::string& kind,
                             const std::string& meta_json) const {
  json header;
  header["kind"] = kind;
  header["meta"] = json::parse(meta_json.empty() ? "{}" : meta_json);
  json blob_list = json::array();
  for (const auto& [name, m] : blobs_)
    blob_list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["blobs"] = blob_list;
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
  os.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : blobs_)
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open for read: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(ErrorCode::FormatVersionMismatch, "bad magic in " + path);
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  if (!is) throw Error(ErrorCode::TruncatedFile, "missing header length");
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw Error(ErrorCode::TruncatedFile, "header cut short");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("header parse: ") + e.what());
  }

  Checkpoint ck;
  ck.kind = header.at("kind");
  ck.meta_json = header.at("meta").dump();
  for (const auto& b : header.at("blobs")) {
    const std::string name = b.at("name");
    MatX m(b.at("rows").get<Eigen::Index>(), b.at("cols").get<Eigen::Index>());
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw Error(ErrorCode::TruncatedFile, "blob cut short: " + name);
    ck.blobs.emplace(name, std::move(m));
  }
  return ck;
}

const MatX& Checkpoint::mat(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw Error(ErrorCode::IoError, "missing blob: " + name);
  return it->second;
}

VecX Checkpoint::vec(const std::string& name) const {
  const MatX& m = mat(name);
  if (m.cols() != 1) throw Error(ErrorCode::IoError, "blob is not a vector: " + name);
  return m.col(0);
}

MlpWeights Checkpoint::mlp(const std::string& prefix, const MlpSpec& spec) const {
  MlpWeights w = init_weights(spec, 0);
  for (size_t i = 0; i < w.dense_w.size(); ++i) {
    w.dense_w[i] = mat(prefix + ".dense" + std::to_string(i) + ".w");
    w.dense_b[i] = vec(prefix + ".dense" + std::to_string(i) + ".b");
  }
  for (size_t i = 0; i < w.bn_gamma.size(); ++i) {
    const std::string base = prefix + ".bn" + std::to_string(i);
    w.bn_gamma[i] = vec(base + ".gamma");
    w.bn_beta[i] = vec(base + ".beta");
    w.bn_run_mean[i] = vec(base + ".run_mean");
    w.bn_run_var[i] = vec(base + ".run_var");
  }
  return w;
}

std::string mlp_spec_to_json(const MlpSpec& spec) {
  json j;
  j["input_dim"] = spec.input_dim;
  j["hidden"] = spec.hidden;
  j["output_dim"] = spec.output_dim;
  j["residual"] = spec.residual;
  j["batchnorm"] = spec.batchnorm;
  return j.dump();
}

MlpSpec mlp_spec_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  MlpSpec spec;
  spec.input_dim = j.at("input_dim");
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim");
  spec.residual = j.at("residual");
  spec.batchnorm = j.at("batchnorm");
  return spec;
}

}  // namespace subdyn
