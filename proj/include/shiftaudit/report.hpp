#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "shiftaudit/attack.hpp"
#include "shiftaudit/audit.hpp"
#include "shiftaudit/io.hpp"

namespace shiftaudit {

// Reports are one JSON object with a fixed key order. Doubles are written in their shortest
// round-trip decimal form (at most 17 significant digits), so reading gives back the same bits.

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const AuditReport& r) {
  const auto& m = r.metadata;
  ordered_json j;
  j["format"] = "shiftaudit-report";
  j["version"] = 1;
  ordered_json md;
  md["seed"] = m.seed;
  md["shift"] = m.shift;
  md["shift_kind"] = m.shift_kind;
  md["sample_count"] = m.sample_count;
  md["model_hash"] = m.model_hash;
  md["ig_steps"] = m.ig_steps;
  md["sg_samples"] = m.sg_samples;
  md["sg_sigma"] = m.sg_sigma;
  md["pattern_convention"] = m.pattern_convention;
  md["dtd_include_bias"] = m.dtd_include_bias;
  md["violation_threshold"] = m.violation_threshold;
  md["max_logit_deviation"] = m.max_logit_deviation;
  md["max_gradient_deviation"] = m.max_gradient_deviation;
  md["degenerate_neurons_net1"] = m.degenerate_neurons_net1;
  md["degenerate_neurons_net2"] = m.degenerate_neurons_net2;
  md["threshold_policy"] = m.threshold_policy;
  ordered_json ids = ordered_json::array();
  for (const auto& s : r.methods) ids.push_back(s.id);
  md["methods"] = ids;
  j["metadata"] = md;

  ordered_json methods = ordered_json::object();
  for (const auto& s : r.methods) {
    ordered_json e;
    e["max_linf_diff"] = s.max_linf_diff;
    e["mean_pearson"] = s.mean_pearson;
    e["mean_spearman"] = s.mean_spearman;
    e["tolerance"] = s.tolerance;
    e["verdict"] = std::string(to_string(s.verdict));
    e["stabilized"] = s.stabilized;
    e["degenerate_hits"] = s.degenerate_hits;
    methods[s.id] = e;
  }
  j["methods"] = methods;
  return j;
}

inline std::string report_string(const AuditReport& r) { return to_json(r).dump(2) + "\n"; }

inline AuditReport report_from_json(const ordered_json& j) {
  try {
    if (j.at("format") != "shiftaudit-report") throw FormatError("not a shiftaudit report");
    if (j.at("version") != 1) throw FormatError("unsupported report version");
    AuditReport r;
    const auto& md = j.at("metadata");
    auto& m = r.metadata;
    m.seed = md.at("seed").get<std::uint64_t>();
    m.shift = md.at("shift").get<std::string>();
    m.shift_kind = md.at("shift_kind").get<std::string>();
    m.sample_count = md.at("sample_count").get<std::uint64_t>();
    m.model_hash = md.at("model_hash").get<std::string>();
    m.ig_steps = md.at("ig_steps").get<std::int64_t>();
    m.sg_samples = md.at("sg_samples").get<std::uint64_t>();
    m.sg_sigma = md.at("sg_sigma").get<double>();
    m.pattern_convention = md.at("pattern_convention").get<std::string>();
    m.dtd_include_bias = md.at("dtd_include_bias").get<bool>();
    m.violation_threshold = md.at("violation_threshold").get<double>();
    m.max_logit_deviation = md.at("max_logit_deviation").get<double>();
    m.max_gradient_deviation = md.at("max_gradient_deviation").get<double>();
    m.degenerate_neurons_net1 = md.at("degenerate_neurons_net1").get<std::uint64_t>();
    m.degenerate_neurons_net2 = md.at("degenerate_neurons_net2").get<std::uint64_t>();
    m.threshold_policy = md.at("threshold_policy").get<std::string>();

    const auto& methods = j.at("methods");
    for (const auto& id_json : md.at("methods")) {
      const auto id = id_json.get<std::string>();
      if (!methods.contains(id)) throw FormatError("report is missing the entry for method '" + id + "'");
      const auto& e = methods.at(id);
      MethodStats s;
      s.id = id;
      s.max_linf_diff = e.at("max_linf_diff").get<double>();
      s.mean_pearson = e.at("mean_pearson").get<double>();
      s.mean_spearman = e.at("mean_spearman").get<double>();
      s.tolerance = e.at("tolerance").get<double>();
      s.verdict = parse_verdict(e.at("verdict").get<std::string>());
      s.stabilized = e.at("stabilized").get<std::uint64_t>();
      s.degenerate_hits = e.at("degenerate_hits").get<std::uint64_t>();
      if (classify(s.max_linf_diff, s.tolerance, m.violation_threshold) != s.verdict) {
        throw FormatError("stored verdict for '" + id + "' does not follow from its statistics");
      }
      r.methods.push_back(std::move(s));
    }
    if (methods.size() != r.methods.size()) throw FormatError("report has method entries not listed in metadata");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

inline AuditReport parse_report(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

inline void write_report(const AuditReport& r, const std::filesystem::path& path) {
  const auto s = report_string(r);
  write_file(path, Bytes(s.begin(), s.end()));
}

inline AuditReport read_report(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return parse_report(std::string(b.begin(), b.end()));
}

inline ordered_json to_json(const AttackReport& r) {
  ordered_json j;
  j["format"] = "shiftaudit-attack";
  j["version"] = 1;
  j["sample_index"] = r.sample_index;
  j["output"] = r.output;
  j["clip"] = r.clip;
  j["eps"] = r.eps;
  j["target_scale"] = r.target_scale;
  j["coverage"] = r.verification.coverage;
  j["masked_linf_error"] = r.verification.masked_linf_error;
  ordered_json methods = ordered_json::object();
  for (const auto& m : r.methods) {
    ordered_json e;
    e["pearson_target"] = m.pearson_target;
    e["pearson_original"] = m.pearson_original;
    e["twin_linf"] = m.twin_linf;
    e["shows_target"] = m.shows_target();
    methods[m.id] = e;
  }
  j["methods"] = methods;
  return j;
}

inline void write_attack_report(const AttackReport& r, const std::filesystem::path& path) {
  const auto s = to_json(r).dump(2) + "\n";
  write_file(path, Bytes(s.begin(), s.end()));
}

}  // namespace shiftaudit
