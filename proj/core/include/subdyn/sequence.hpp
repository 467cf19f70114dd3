#pragma once

#include <string>
#include <vector>

#include "subdyn/topology.hpp"

namespace subdyn {

/// One timestep: flat positions plus the boundary-condition parameter vector.
struct Frame {
  int t = 0;
  VecX x;  // 3N
  VecX p;  // bc_dim
};

struct StateSequence {
  std::vector<Frame> frames;
  double dt = 1.0 / 30.0;
  std::string scenario;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

/// Dataset file IO, format SDSQ1: 8-byte magic "SDSQ0001", u64 little-endian
/// JSON header length, UTF-8 JSON header {topology, dt, bc_dim, frame_count,
/// scenario}, then frame_count records of little-endian float32 (x then p).
void sequence_io_write(const StateSequence& seq, const Topology& topo, const std::string& path);

struct LoadedSequence {
  StateSequence sequence;
  Topology topology;
};
LoadedSequence sequence_io_read(const std::string& path);

}  // namespace subdyn
