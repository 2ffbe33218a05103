#include <cerrno>
#include <csignal>
#include <cstring>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "io_util.hpp"
#include "xloc/adapter.hpp"
#include "xloc/errors.hpp"

namespace xloc {

using io::json;

namespace {

constexpr auto kSchema = ErrorCategory::kSchema;

json depth_ref_json(const std::string& ref) { return ref.empty() ? json(nullptr) : json(ref); }

std::string depth_ref_from(const json& j) {
  if (!j.contains("depth") || j.at("depth").is_null()) return {};
  return io::get_field<std::string>(j, "depth", kSchema);
}

}  // namespace

std::string encode_request(const RpcRequest& req) {
  json candidates = json::array();
  for (const CandidateView& c : req.ctx.candidates) {
    candidates.push_back(json{{"frame_id", c.frame_id},
                              {"intrinsics", io::to_json(c.intrinsics)},
                              {"pose", io::to_json(c.pose)},
                              {"depth", depth_ref_json(c.depth_ref)}});
  }
  const json j{{"id", req.id},
               {"seed", req.seed},
               {"query", json{{"frame_id", req.ctx.query.frame_id},
                              {"intrinsics", io::to_json(req.ctx.query.intrinsics)},
                              {"depth", depth_ref_json(req.ctx.query.depth_ref)}}},
               {"candidates", std::move(candidates)}};
  return j.dump();
}

RpcRequest decode_request(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(kSchema, std::string("malformed request: ") + e.what());
  }
  RpcRequest req;
  req.id = io::get_field<std::uint64_t>(j, "id", kSchema);
  req.seed = io::get_field<std::uint64_t>(j, "seed", kSchema);
  if (!j.contains("query") || !j.contains("candidates") || !j.at("candidates").is_array()) {
    fail(kSchema, "request lacks query or candidates");
  }
  const json& q = j.at("query");
  req.ctx.query.frame_id = io::get_field<std::string>(q, "frame_id", kSchema);
  if (!q.contains("intrinsics")) fail(kSchema, "query lacks intrinsics");
  req.ctx.query.intrinsics = io::intrinsics_from_json(q.at("intrinsics"));
  req.ctx.query.depth_ref = depth_ref_from(q);
  for (const json& c : j.at("candidates")) {
    CandidateView v;
    v.frame_id = io::get_field<std::string>(c, "frame_id", kSchema);
    if (!c.contains("intrinsics") || !c.contains("pose")) fail(kSchema, "candidate lacks intrinsics or pose");
    v.intrinsics = io::intrinsics_from_json(c.at("intrinsics"));
    v.pose = io::pose_from_json(c.at("pose"));
    v.depth_ref = depth_ref_from(c);
    req.ctx.candidates.push_back(std::move(v));
  }
  return req;
}

std::string encode_response(const RpcResponse& resp) {
  const auto& q = resp.estimate.pose.rotation.quaternion();
  const auto& t = resp.estimate.pose.translation;
  return json{{"id", resp.id},
              {"quaternion", {q.w(), q.x(), q.y(), q.z()}},
              {"translation", {t.x(), t.y(), t.z()}},
              {"confidence", resp.estimate.confidence},
              {"valid", resp.estimate.valid}}
      .dump();
}

std::string encode_error_response(std::optional<std::uint64_t> id, const std::string& message) {
  return json{{"id", id ? json(*id) : json(nullptr)}, {"error", message}}.dump();
}

RpcResponse decode_response(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(kSchema, std::string("malformed response: ") + e.what());
  }
  RpcResponse resp;
  if (!j.is_object() || !j.contains("id")) fail(kSchema, "response lacks an id");
  if (!j.at("id").is_null()) resp.id = io::get_field<std::uint64_t>(j, "id", kSchema);
  if (j.contains("error")) {
    resp.estimate.valid = false;
    resp.estimate.error = io::get_field<std::string>(j, "error", kSchema);
    return resp;
  }
  const auto q = io::get_field<std::vector<double>>(j, "quaternion", kSchema);
  const auto t = io::get_field<std::vector<double>>(j, "translation", kSchema);
  if (q.size() != 4 || t.size() != 3) fail(kSchema, "response pose has the wrong arity");
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  const Rotation R = std::abs(quat.norm() - 1.0) < 1e-12 ? Rotation::from_unit_quaternion(quat) : Rotation(quat);
  resp.estimate.pose = Pose{R, Vec3(t[0], t[1], t[2])};
  resp.estimate.confidence = io::get_field<double>(j, "confidence", kSchema);
  resp.estimate.valid = io::get_field<bool>(j, "valid", kSchema);
  return resp;
}

// ---------------------------------------------------------------------------

AdapterLocalizer::AdapterLocalizer(std::vector<std::string> argv) {
  if (argv.empty()) fail(ErrorCategory::kInvalidArgument, "adapter command is empty");
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) fail(ErrorCategory::kTransport, "pipe failed");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    fail(ErrorCategory::kTransport, "pipe failed");
  }

  std::vector<char*> cargv;
  for (std::string& a : argv) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) fail(ErrorCategory::kTransport, "fork failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

AdapterLocalizer::~AdapterLocalizer() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

void AdapterLocalizer::write_line(const std::string& line) {
  std::string data = line + '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = write(to_child_, data.data() + off, data.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCategory::kTransport, std::string("adapter write failed: ") + std::strerror(errno));
    off += static_cast<std::size_t>(n);
  }
}

std::string AdapterLocalizer::read_line() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCategory::kTransport, "adapter closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

NeuralPoseEstimate AdapterLocalizer::localize(const LocalizationContext& ctx, std::uint64_t seed) {
  if (ctx.candidates.empty()) fail(ErrorCategory::kPrecondition, "localization context has no candidates");
  const std::lock_guard<std::mutex> lock(mu_);
  RpcRequest req{next_id_++, seed, ctx};
  write_line(encode_request(req));
  RpcResponse resp;
  try {
    resp = decode_response(read_line());
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kTransport) throw;
    fail(ErrorCategory::kTransport, e.what());
  }
  if (resp.id != req.id && resp.estimate.error.empty()) {
    fail(ErrorCategory::kTransport, "adapter answered request " + std::to_string(req.id) + " with id " +
                                        std::to_string(resp.id));
  }
  return resp.estimate;
}

}  // namespace xloc
