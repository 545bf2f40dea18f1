// SPDX-License-Identifier: Apache-2.0
// Reference critic for the length-prefixed pipe protocol. The pull direction
// is rendered minus reference; the weight is 0.25 tau + 0.0625 sum(pose), so
// a test can verify that every request field crossed the wire.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <vector>

namespace {

bool read_exact(void* p, std::size_t n) { return std::fread(p, 1, n, stdin) == n; }

float f32_at(const std::vector<unsigned char>& b, std::size_t i) {
  float v;
  std::memcpy(&v, b.data() + i, 4);
  return v;
}

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t i) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + i, 4);
  return v;
}

}  // namespace

int main() {
  for (;;) {
    std::uint32_t len = 0;
    if (!read_exact(&len, 4)) return 0;  // clean EOF between messages
    std::vector<unsigned char> req(len);
    if (!read_exact(req.data(), len)) return 1;
    if (len < 4 * 19) return 1;

    float pose_sum = 0;
    for (std::size_t i = 0; i < 16; ++i) pose_sum += f32_at(req, 4 * i);
    const float tau = f32_at(req, 64);
    const std::uint32_t h = u32_at(req, 68);
    const std::uint32_t w = u32_at(req, 72);
    const std::size_t px = std::size_t(h) * w * 3;
    if (len != 4 * (19 + 2 * px)) return 1;

    std::vector<unsigned char> resp(4 * (px + 1));
    for (std::size_t i = 0; i < px; ++i) {
      const float g = f32_at(req, 76 + 4 * (px + i)) - f32_at(req, 76 + 4 * i);
      std::memcpy(resp.data() + 4 * i, &g, 4);
    }
    const float weight = 0.25f * tau + 0.0625f * pose_sum;
    std::memcpy(resp.data() + 4 * px, &weight, 4);

    const std::uint32_t rlen = std::uint32_t(resp.size());
    if (std::fwrite(&rlen, 1, 4, stdout) != 4) return 1;
    if (std::fwrite(resp.data(), 1, resp.size(), stdout) != resp.size()) return 1;
    std::fflush(stdout);
  }
}
