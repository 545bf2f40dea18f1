// SPDX-License-Identifier: Apache-2.0
#include "gmjo/scene/gaussians.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo::scene {

void GaussianData::validate(const std::string& what) const {
  const std::size_t n = positions.size() / 3;
  check(positions.size() == n * 3, what, ": positions not a multiple of 3");
  check(log_scales.size() == n * 3, what, ": log_scales count mismatch");
  check(rotations.size() == n * 4, what, ": rotations count mismatch");
  check(opacities.size() == n, what, ": opacities count mismatch");
  check(sh_degree >= 0 && sh_degree <= 3, what, ": sh degree out of range");
  check(sh.size() == n * std::size_t(sh_coeff_count(sh_degree)) * 3, what,
        ": sh coefficient count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    double q2 = 0;
    for (int k = 0; k < 4; ++k) q2 += rotations[i * 4 + k] * rotations[i * 4 + k];
    check(q2 > 0, what, ": zero quaternion at index ", i);
  }
  for (double v : positions) check(std::isfinite(v), what, ": non-finite position");
  for (double v : log_scales) check(std::isfinite(v), what, ": non-finite log scale");
}

GaussianSet GaussianSet::from_data(const GaussianData& d, bool requires_grad) {
  d.validate("gaussian set");
  const int n = d.size();
  GaussianSet s;
  s.positions = diff::Tensor::leaf({n, 3}, d.positions, requires_grad);
  s.log_scales = diff::Tensor::leaf({n, 3}, d.log_scales, requires_grad);
  s.rotations = diff::Tensor::leaf({n, 4}, d.rotations, requires_grad);
  s.opacity_logits = diff::Tensor::leaf({n}, d.opacities, requires_grad);
  s.sh = diff::Tensor::leaf({n, sh_coeff_count(d.sh_degree) * 3}, d.sh, requires_grad);
  s.sh_degree = d.sh_degree;
  s.label = d.label;
  return s;
}

GaussianData GaussianSet::to_data() const {
  GaussianData d;
  d.positions = positions.val();
  d.log_scales = log_scales.val();
  d.rotations = rotations.val();
  d.opacities = opacity_logits.val();
  d.sh = sh.val();
  d.sh_degree = sh_degree;
  d.label = label;
  return d;
}

Eigen::Vector3d recenter_median(GaussianData& d) {
  const int n = d.size();
  check(n > 0, "recenter_median: empty set");
  Eigen::Vector3d med;
  std::vector<double> axis(static_cast<std::size_t>(n));
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < n; ++i) axis[std::size_t(i)] = d.positions[std::size_t(i) * 3 + a];
    std::sort(axis.begin(), axis.end());
    med[a] = (n % 2 == 1) ? axis[std::size_t(n / 2)]
                          : 0.5 * (axis[std::size_t(n / 2 - 1)] + axis[std::size_t(n / 2)]);
  }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) d.positions[std::size_t(i) * 3 + a] -= med[a];
  return med;
}

namespace {

constexpr char kMagic[4] = {'G', 'M', 'J', 'O'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  check(bool(f), "cannot write checkpoint '", path, "'");
  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_pod(f, std::uint32_t(ck.sets.size()));
  for (const GaussianData& d : ck.sets) {
    d.validate(cat("checkpoint set"));
    write_pod(f, std::uint32_t(d.size()));
    write_pod(f, std::uint32_t(d.sh_degree));
    write_pod(f, std::int32_t(d.label));
    write_array(f, d.positions);
    write_array(f, d.log_scales);
    write_array(f, d.rotations);
    write_array(f, d.opacities);
    write_array(f, d.sh);
  }
  write_pod(f, std::uint32_t(ck.sections.size()));
  for (const auto& [name, payload] : ck.sections) {
    write_pod(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    write_pod(f, std::uint64_t(payload.size()));
    write_array(f, payload);
  }
  check(bool(f), "failed writing checkpoint '", path, "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "cannot open checkpoint '", path, "'");
  char magic[4];
  f.read(magic, 4);
  check(bool(f) && std::equal(magic, magic + 4, kMagic),
        "checkpoint '", path, "': bad magic, expected GMJO");
  const auto version = read_pod<std::uint32_t>(f, "version");
  check(version == kVersion, "checkpoint '", path, "': version ", version, ", expected ",
        kVersion);
  Checkpoint ck;
  const auto num_sets = read_pod<std::uint32_t>(f, "set count");
  for (std::uint32_t i = 0; i < num_sets; ++i) {
    GaussianData d;
    const auto n = read_pod<std::uint32_t>(f, "gaussian count");
    d.sh_degree = int(read_pod<std::uint32_t>(f, "sh degree"));
    check(d.sh_degree >= 0 && d.sh_degree <= 3, "checkpoint '", path, "': sh degree ",
          d.sh_degree, " out of range");
    d.label = read_pod<std::int32_t>(f, "label");
    d.positions = read_array<double>(f, n * 3, "positions");
    d.log_scales = read_array<double>(f, n * 3, "log scales");
    d.rotations = read_array<double>(f, n * 4, "rotations");
    d.opacities = read_array<double>(f, n, "opacities");
    d.sh = read_array<double>(f, n * std::size_t(sh_coeff_count(d.sh_degree)) * 3, "sh");
    d.validate(cat("checkpoint '", path, "' set ", i));
    ck.sets.push_back(std::move(d));
  }
  const auto num_sections = read_pod<std::uint32_t>(f, "section count");
  for (std::uint32_t i = 0; i < num_sections; ++i) {
    const auto name_len = read_pod<std::uint32_t>(f, "section name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    check(bool(f), "checkpoint '", path, "': truncated section name");
    const auto payload_len = read_pod<std::uint64_t>(f, "section length");
    ck.sections[name] = read_array<std::uint8_t>(f, std::size_t(payload_len), "section payload");
  }
  return ck;
}

}  // namespace gmjo::scene
