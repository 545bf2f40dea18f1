// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/config.hpp"

#include <cstdio>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo::pipeline {

namespace {

using FieldRef = std::variant<int RunConfig::*, double RunConfig::*, std::uint64_t RunConfig::*>;

struct Field {
  const char* name;
  FieldRef ref;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      {"seed", &RunConfig::seed},
      {"sh_degree", &RunConfig::sh_degree},
      {"ref_frame", &RunConfig::ref_frame},
      {"crop_fill", &RunConfig::crop_fill},
      {"lift_steps", &RunConfig::lift_steps},
      {"lift_target", &RunConfig::lift_target},
      {"bg_target", &RunConfig::bg_target},
      {"maintain_every", &RunConfig::maintain_every},
      {"max_gaussians", &RunConfig::max_gaussians},
      {"prior_size", &RunConfig::prior_size},
      {"prior_every_lift", &RunConfig::prior_every_lift},
      {"prior_every_dynamic", &RunConfig::prior_every_dynamic},
      {"prior_weight", &RunConfig::prior_weight},
      {"tau_start", &RunConfig::tau_start},
      {"tau_end", &RunConfig::tau_end},
      {"steps_per_frame", &RunConfig::steps_per_frame},
      {"batch_frames", &RunConfig::batch_frames},
      {"grad_accum", &RunConfig::grad_accum},
      {"deform_spatial_res", &RunConfig::deform_spatial_res},
      {"deform_temporal_fraction", &RunConfig::deform_temporal_fraction},
      {"deform_features", &RunConfig::deform_features},
      {"deform_hidden", &RunConfig::deform_hidden},
      {"deform_bases", &RunConfig::deform_bases},
      {"w_rgb", &RunConfig::w_rgb},
      {"w_mask", &RunConfig::w_mask},
      {"w_flow", &RunConfig::w_flow},
      {"w_depth", &RunConfig::w_depth},
      {"w_class", &RunConfig::w_class},
      {"w_rigid", &RunConfig::w_rigid},
      {"w_shreg", &RunConfig::w_shreg},
      {"lr_position", &RunConfig::lr_position},
      {"lr_position_final", &RunConfig::lr_position_final},
      {"lr_sh", &RunConfig::lr_sh},
      {"lr_opacity", &RunConfig::lr_opacity},
      {"lr_scale_rot", &RunConfig::lr_scale_rot},
      {"lr_grid", &RunConfig::lr_grid},
      {"lr_heads", &RunConfig::lr_heads},
      {"lr_align", &RunConfig::lr_align},
      {"lr_bg_position", &RunConfig::lr_bg_position},
      {"prune_opacity", &RunConfig::prune_opacity},
      {"prune_scale", &RunConfig::prune_scale},
      {"densify_grad", &RunConfig::densify_grad},
      {"densify_scale", &RunConfig::densify_scale},
      {"split_shrink", &RunConfig::split_shrink},
  };
  return kFields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void assign(RunConfig& cfg, const Field& f, const std::string& text, const std::string& where) {
  std::size_t used = 0;
  try {
    if (std::holds_alternative<int RunConfig::*>(f.ref)) {
      cfg.*std::get<int RunConfig::*>(f.ref) = std::stoi(text, &used);
    } else if (std::holds_alternative<std::uint64_t RunConfig::*>(f.ref)) {
      cfg.*std::get<std::uint64_t RunConfig::*>(f.ref) = std::stoull(text, &used);
    } else {
      cfg.*std::get<double RunConfig::*>(f.ref) = std::stod(text, &used);
    }
  } catch (const std::exception&) {
    fail(cat(where, ": cannot parse value '", text, "' for key '", f.name, "'"));
  }
  check(used == text.size(), where, ": trailing junk in value '", text, "' for key '", f.name,
        "'");
}

}  // namespace

deform::DeformerConfig RunConfig::deformer_config() const {
  deform::DeformerConfig d;
  d.spatial_res = deform_spatial_res;
  d.temporal_fraction = deform_temporal_fraction;
  d.features = deform_features;
  d.hidden = deform_hidden;
  d.num_bases = deform_bases;
  return d;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  std::istringstream is(slurp(path));
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = cat("config '", path, "' line ", lineno);
    const auto eq = line.find('=');
    check(eq != std::string::npos, where, ": expected key=value, got '", line, "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty() && !value.empty(), where, ": empty key or value");
    bool found = false;
    for (const Field& f : fields()) {
      if (key == f.name) {
        assign(cfg, f, value, where);
        found = true;
        break;
      }
    }
    check(found, where, ": unknown key '", key, "'");
  }
  return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ostringstream os;
  char buf[64];
  for (const Field& f : fields()) {
    if (std::holds_alternative<int RunConfig::*>(f.ref)) {
      os << f.name << " = " << cfg.*std::get<int RunConfig::*>(f.ref) << "\n";
    } else if (std::holds_alternative<std::uint64_t RunConfig::*>(f.ref)) {
      os << f.name << " = " << cfg.*std::get<std::uint64_t RunConfig::*>(f.ref) << "\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", cfg.*std::get<double RunConfig::*>(f.ref));
      os << f.name << " = " << buf << "\n";
    }
  }
  spit(path, os.str());
}

}  // namespace gmjo::pipeline
