#pragma once

// Line-delimited JSON protocol spoken with an external neural localizer
// process over its stdin/stdout, and the NeuralLocalizer that drives it.
//
// Request (one line):
//   {"id": u64, "seed": u64,
//    "query": {"frame_id": str, "intrinsics": {...}, "depth": str|null},
//    "candidates": [{"frame_id": str, "intrinsics": {...},
//                    "pose": {"qw","qx","qy","qz","tx","ty","tz"},
//                    "depth": str|null}, ...]}
// Response (one line, same id):
//   {"id": u64, "quaternion": [w,x,y,z], "translation": [x,y,z],
//    "confidence": f64, "valid": bool}
// or {"id": u64|null, "error": str} for a request the server could not serve.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "xloc/neural.hpp"

namespace xloc {

struct RpcRequest {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  LocalizationContext ctx;  // conditioned point clouds are not transmitted
};

struct RpcResponse {
  std::uint64_t id = 0;
  NeuralPoseEstimate estimate;
};

std::string encode_request(const RpcRequest& req);
// Throws kSchema on malformed input.
RpcRequest decode_request(const std::string& line);
std::string encode_response(const RpcResponse& resp);
std::string encode_error_response(std::optional<std::uint64_t> id, const std::string& message);
// Error responses decode to valid = false with `error` set.
RpcResponse decode_response(const std::string& line);

// Spawns `argv` and serializes requests over its stdio. Concurrent callers are
// queued behind one mutex so request/response pairing holds.
class AdapterLocalizer final : public NeuralLocalizer {
 public:
  explicit AdapterLocalizer(std::vector<std::string> argv);
  ~AdapterLocalizer() override;
  AdapterLocalizer(const AdapterLocalizer&) = delete;
  AdapterLocalizer& operator=(const AdapterLocalizer&) = delete;

  NeuralPoseEstimate localize(const LocalizationContext& ctx, std::uint64_t seed) override;

 private:
  void write_line(const std::string& line);
  std::string read_line();

  std::mutex mu_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
};

}  // namespace xloc
