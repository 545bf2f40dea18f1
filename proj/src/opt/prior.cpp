// SPDX-License-Identifier: Apache-2.0
#include "gmjo/opt/prior.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <limits>

#include "gmjo/util.hpp"

namespace gmjo::opt {

static_assert(std::endian::native == std::endian::little, "wire format is little-endian");

SyntheticOraclePrior::SyntheticOraclePrior(std::vector<std::pair<Eigen::Matrix4d, Image>> views,
                                           double weight)
    : views_(std::move(views)), weight_(weight) {
  check(!views_.empty(), "SyntheticOraclePrior: no views");
}

PriorResponse SyntheticOraclePrior::query(const Eigen::Matrix4d& pose, double, const Image&,
                                          const Image& rendered) {
  const Image* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [grid_pose, view] : views_) {
    const double d = (grid_pose - pose).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = &view;
    }
  }
  check(best->size() == rendered.size(), "SyntheticOraclePrior: view/render size mismatch");
  PriorResponse out;
  out.gradient = rendered;
  for (std::size_t i = 0; i < out.gradient.data.size(); ++i)
    out.gradient.data[i] -= best->data[i];
  out.weight = weight_;
  return out;
}

namespace {

void append_f32(std::vector<unsigned char>& buf, float v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

float take_f32(const std::vector<unsigned char>& buf, std::size_t& pos) {
  float v;
  std::memcpy(&v, buf.data() + pos, 4);
  pos += 4;
  return v;
}

void write_all(int fd, const unsigned char* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail(cat("prior pipe write failed: ", std::strerror(errno)));
    }
    p += w;
    n -= std::size_t(w);
  }
}

bool read_all(int fd, unsigned char* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(cat("prior pipe read failed: ", std::strerror(errno)));
    }
    if (r == 0) return false;
    p += r;
    n -= std::size_t(r);
  }
  return true;
}

}  // namespace

PipePrior::PipePrior(std::vector<std::string> command) {
  check(!command.empty(), "PipePrior: empty command");
  // A dead critic must surface as EPIPE on write, not kill the process.
  std::signal(SIGPIPE, SIG_IGN);
  int to_pipe[2], from_pipe[2];
  check(::pipe(to_pipe) == 0 && ::pipe(from_pipe) == 0, "PipePrior: pipe() failed");

  const pid_t pid = ::fork();
  check(pid >= 0, "PipePrior: fork() failed");
  if (pid == 0) {
    ::dup2(to_pipe[0], STDIN_FILENO);
    ::dup2(from_pipe[1], STDOUT_FILENO);
    ::close(to_pipe[0]);
    ::close(to_pipe[1]);
    ::close(from_pipe[0]);
    ::close(from_pipe[1]);
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (std::string& a : command) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(to_pipe[0]);
  ::close(from_pipe[1]);
  pid_ = pid;
  to_child_ = to_pipe[1];
  from_child_ = from_pipe[0];
}

PipePrior::~PipePrior() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

void PipePrior::send(const std::vector<unsigned char>& payload) {
  check(payload.size() <= std::numeric_limits<std::uint32_t>::max(), "PipePrior: payload too big");
  const std::uint32_t len = std::uint32_t(payload.size());
  unsigned char head[4];
  std::memcpy(head, &len, 4);
  write_all(to_child_, head, 4);
  write_all(to_child_, payload.data(), payload.size());
}

std::vector<unsigned char> PipePrior::receive() {
  unsigned char head[4];
  check(read_all(from_child_, head, 4), "PipePrior: critic closed the pipe");
  std::uint32_t len = 0;
  std::memcpy(&len, head, 4);
  std::vector<unsigned char> payload(len);
  check(len == 0 || read_all(from_child_, payload.data(), len),
        "PipePrior: truncated response");
  return payload;
}

PriorResponse PipePrior::query(const Eigen::Matrix4d& pose, double tau, const Image& reference,
                               const Image& rendered) {
  check(rendered.c == 3 && reference.c == 3, "PipePrior: want [h,w,3] images");
  check(reference.h == rendered.h && reference.w == rendered.w,
        "PipePrior: reference/render size mismatch");

  std::vector<unsigned char> req;
  req.reserve(4 * (16 + 1 + 2 + 2 * rendered.size()));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) append_f32(req, float(pose(r, c)));
  append_f32(req, float(tau));
  append_u32(req, std::uint32_t(rendered.h));
  append_u32(req, std::uint32_t(rendered.w));
  for (double v : reference.data) append_f32(req, float(v));
  for (double v : rendered.data) append_f32(req, float(v));
  send(req);

  const std::vector<unsigned char> resp = receive();
  const std::size_t want = 4 * (rendered.size() + 1);
  check(resp.size() == want, "PipePrior: response is ", resp.size(), " bytes, want ", want);
  PriorResponse out;
  out.gradient = Image(rendered.h, rendered.w, 3);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < out.gradient.data.size(); ++i)
    out.gradient.data[i] = take_f32(resp, pos);
  out.weight = take_f32(resp, pos);
  return out;
}

}  // namespace gmjo::opt
