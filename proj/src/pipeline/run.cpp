// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/run.hpp"

#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>

#include "gmjo/io.hpp"
#include "gmjo/pipeline/init.hpp"
#include "gmjo/util.hpp"

namespace gmjo::pipeline {

namespace {

constexpr std::uint32_t kMetaVersion = 1;

std::vector<std::uint8_t> stream_bytes(const std::ostringstream& os) {
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

std::istringstream section_stream(const scene::Checkpoint& ck, const std::string& name) {
  const auto it = ck.sections.find(name);
  check(it != ck.sections.end(), "checkpoint: missing section '", name, "'");
  return std::istringstream(std::string(it->second.begin(), it->second.end()));
}

}  // namespace

PipelineResult run_pipeline(const bench::Dataset& data, const RunConfig& cfg, bool joint,
                            opt::PriorProvider* prior, std::ostream* log) {
  data.validate();
  PipelineResult res;
  for (int k = 0; k < data.num_objects; ++k) {
    res.lifts.push_back(static_lift(data, k, cfg, prior, log));
    if (log)
      *log << "lift object " << k << " done: " << res.lifts.back().object.canonical.size()
           << " gaussians, crop psnr " << res.lifts.back().ref_psnr << "\n";
  }
  Rng bg_rng(cfg.seed * 524287ull + 9ull);
  scene::GaussianSet bg = init_background(data, cfg, bg_rng);
  res.fit = dynamic_fit(data, res.lifts, std::move(bg), cfg, joint, prior, log);
  res.tracks = predict_tracks(res.fit, data, dataset_queries(data));
  res.scores =
      bench::score_tracks(data.tracks, pixel_tracks(res.tracks), data.width, data.height, true);
  if (log)
    *log << "track scores: ate " << res.scores.ate << " mte " << res.scores.mte << " a_epe "
         << res.scores.a_epe << " m_epe " << res.scores.m_epe << " over "
         << res.scores.tracks_scored << " tracks\n";
  return res;
}

scene::Checkpoint make_checkpoint(const FitResult& fit) {
  scene::Checkpoint ck;
  const int K = int(fit.objects.size());
  for (const FittedObject& obj : fit.objects) ck.sets.push_back(obj.canonical.to_data());
  ck.sets.push_back(fit.background.to_data());
  {
    std::ostringstream os;
    write_pod(os, kMetaVersion);
    write_pod(os, std::uint32_t(K));
    write_pod(os, std::uint32_t(fit.frames));
    ck.sections["meta"] = stream_bytes(os);
  }
  for (int k = 0; k < K; ++k) {
    const FittedObject& obj = fit.objects[std::size_t(k)];
    ck.sections["deformer_" + std::to_string(k)] = obj.deformer.serialize();
    std::ostringstream os;
    const int T = obj.align.frames();
    write_pod(os, std::uint32_t(T));
    write_pod(os, obj.depth_anchor);
    write_array(os, obj.align.log_sigma.val());
    write_array(os, obj.align.tau.val());
    write_array(os, obj.align.log_k.val());
    check(int(obj.pivots.size()) == T, "checkpoint: pivot count mismatch");
    std::vector<double> flat;
    flat.reserve(std::size_t(T) * 3);
    for (const Eigen::Vector3d& p : obj.pivots)
      for (int a = 0; a < 3; ++a) flat.push_back(p[a]);
    write_array(os, flat);
    ck.sections["align_" + std::to_string(k)] = stream_bytes(os);
  }
  return ck;
}

FitResult fit_from_checkpoint(const scene::Checkpoint& ck) {
  std::istringstream meta = section_stream(ck, "meta");
  const auto version = read_pod<std::uint32_t>(meta, "checkpoint version");
  check(version == kMetaVersion, "checkpoint: unsupported version ", version);
  const int K = int(read_pod<std::uint32_t>(meta, "checkpoint object count"));
  const int T = int(read_pod<std::uint32_t>(meta, "checkpoint frame count"));
  check(int(ck.sets.size()) == K + 1, "checkpoint: expected ", K + 1, " sets, found ",
        ck.sets.size());

  FitResult fit;
  fit.frames = T;
  for (int k = 0; k < K; ++k) {
    FittedObject obj;
    obj.canonical = scene::GaussianSet::from_data(ck.sets[std::size_t(k)], false);
    obj.label = obj.canonical.label;
    check(obj.label == k, "checkpoint: set ", k, " carries label ", obj.label);

    const auto dit = ck.sections.find("deformer_" + std::to_string(k));
    check(dit != ck.sections.end(), "checkpoint: missing deformer for object ", k);
    obj.deformer = deform::Deformer::deserialize(dit->second);

    std::istringstream as = section_stream(ck, "align_" + std::to_string(k));
    const int at = int(read_pod<std::uint32_t>(as, "alignment frame count"));
    check(at == T, "checkpoint: alignment frames disagree with meta");
    obj.depth_anchor = read_pod<double>(as, "alignment depth anchor");
    obj.align.depth_anchor = obj.depth_anchor;
    obj.align.log_sigma = diff::Tensor::leaf(
        {T}, read_array<double>(as, std::size_t(T), "alignment log sigma"), false);
    obj.align.tau = diff::Tensor::leaf(
        {T, 2}, read_array<double>(as, std::size_t(T) * 2, "alignment tau"), false);
    obj.align.log_k = diff::Tensor::leaf(
        {T}, read_array<double>(as, std::size_t(T), "alignment log k"), false);
    const std::vector<double> flat =
        read_array<double>(as, std::size_t(T) * 3, "alignment pivots");
    for (int t = 0; t < T; ++t)
      obj.pivots.emplace_back(flat[std::size_t(t) * 3], flat[std::size_t(t) * 3 + 1],
                              flat[std::size_t(t) * 3 + 2]);

    obj.rigidity = opt::RigidityGraph::build(obj.canonical.positions.val(),
                                             obj.canonical.rotations.val(), 8);
    fit.objects.push_back(std::move(obj));
  }
  fit.background = scene::GaussianSet::from_data(ck.sets[std::size_t(K)], false);
  return fit;
}

}  // namespace gmjo::pipeline
