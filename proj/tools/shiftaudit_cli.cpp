// Command-line front end: train, audit, attack, render, make-synthetic.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftaudit/shiftaudit.hpp"

namespace fs = std::filesystem;
using namespace shiftaudit;

namespace {

struct DataOptions {
  std::string source;
  std::size_t synthetic_train = 10000;
  std::size_t synthetic_test = 2000;

  void add_to(CLI::App* app, bool required) {
    auto* opt = app->add_option("--data", source,
                                "MNIST directory with uncompressed IDX files, or 'synthetic' for the built-in "
                                "seven-segment digit corpus");
    if (required) opt->required();
    app->add_option("--synthetic-train", synthetic_train, "Training-split size of the synthetic corpus")
        ->capture_default_str();
    app->add_option("--synthetic-test", synthetic_test, "Test-split size of the synthetic corpus")
        ->capture_default_str();
  }

  Dataset load(std::string_view split) const {
    if (source == "synthetic") {
      return split == "train" ? make_synthetic_digits(synthetic_train, kSyntheticTrainSeed)
                              : make_synthetic_digits(synthetic_test, kSyntheticTestSeed);
    }
    return load_mnist(source, split);
  }
};

std::vector<std::size_t> parse_arch(const std::string& s) {
  std::vector<std::size_t> sizes;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      sizes.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ArgumentError("bad layer size '" + item + "' in --arch");
    }
  }
  return sizes;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(std::string("bad number '") + s + "' for " + what);
  }
}

/// const:V | checker:CELL:AMP | image:PATH:SCALE | file:PATH
ShiftVector parse_shift(const std::string& spec, std::size_t dim) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "const") return make_scalar_shift(parse_double(rest, "const shift"), dim);
  if (kind == "checker") {
    const auto p = split(rest, ':');
    if (p.size() != 2) throw ArgumentError("checker shift needs checker:CELL:AMP");
    return make_checkerboard_shift(static_cast<int>(parse_double(p[0], "checker cell")),
                                   parse_double(p[1], "checker amplitude"));
  }
  if (kind == "image") {
    const auto at = rest.rfind(':');
    if (at == std::string::npos) throw ArgumentError("image shift needs image:PATH:SCALE");
    return image_to_shift(read_pgm_unit(rest.substr(0, at)), parse_double(rest.substr(at + 1), "image scale"));
  }
  if (kind == "file") {
    auto v = read_vector(rest);
    if (v.size() != dim) throw DimensionError("shift file has " + std::to_string(v.size()) + " values");
    return {std::move(v), ShiftKind::image};
  }
  throw ArgumentError("unknown shift '" + spec + "' (use const:V, checker:CELL:AMP, image:PATH:SCALE or file:PATH)");
}

std::vector<MethodId> parse_methods(const std::string& list) {
  if (list == "all") return all_method_ids();
  std::vector<MethodId> ids;
  for (const auto& name : split(list, ',')) ids.push_back(MethodId::parse(name));
  if (ids.empty()) throw ArgumentError("--methods is empty");
  return ids;
}

PatternMeanConvention parse_convention(const std::string& s) {
  if (s == "positive-regime") return PatternMeanConvention::positive_regime;
  if (s == "global") return PatternMeanConvention::global;
  throw ArgumentError("unknown pattern convention '" + s + "'");
}

/// Pattern statistics source: the training split, limited to the sample count recorded with the
/// stored patterns (or `fallback_count` when the model has none).
Dataset pattern_data(const DataOptions& data, const StoredModel& stored, std::size_t fallback_count) {
  const std::size_t n = stored.patterns ? stored.patterns->source_samples : fallback_count;
  return head(data.load("train"), n);
}

int cmd_train(const DataOptions& data, const std::string& arch, int epochs, double lr, std::size_t batch,
              std::uint64_t seed, std::size_t pattern_samples, const std::string& out) {
  const Dataset train = data.load("train");
  const Dataset test = data.load("test");
  const TrainConfig cfg{epochs, lr, batch, seed};
  MlpModel model = init_model(parse_arch(arch), seed);
  std::cerr << "training " << arch << " on " << train.size() << " samples\n";
  model = train_sgd(model, train, cfg, [](int e, double loss) {
    std::cerr << "epoch " << (e + 1) << " mean loss " << loss << "\n";
  });
  const double acc = accuracy(model, test);
  const PatternSet patterns = estimate_patterns(model, head(train, pattern_samples));
  save_model(out, model, &patterns);
  std::cout << "test accuracy " << acc << " on " << test.size() << " samples\n"
            << "degenerate pattern neurons " << patterns.degenerate_count() << "\n"
            << "model " << out << " hash " << model_hash(model) << "\n";
  return 0;
}

struct AuditOptions {
  std::string model, shift, methods = "all", report, heatmaps, convention = "positive-regime";
  std::size_t samples = 64, sg_samples = 50, pattern_samples = 10000;
  std::uint64_t seed = 0;
  int ig_steps = 300;
  double sg_sigma = -1.0;
  bool dtd_bias = false;
};

int cmd_audit(const DataOptions& data, const AuditOptions& o) {
  const StoredModel stored = load_model(o.model);
  const Dataset test = data.load("test");
  AuditConfig cfg;
  cfg.methods = parse_methods(o.methods);
  cfg.n_samples = o.samples;
  cfg.seed = o.seed;
  cfg.ig_steps = o.ig_steps;
  cfg.sg_samples = o.sg_samples;
  if (o.sg_sigma >= 0.0) cfg.sg_sigma = o.sg_sigma;
  cfg.dtd.include_bias = o.dtd_bias;
  cfg.pattern_convention = parse_convention(o.convention);
  cfg.shift_label = o.shift;

  const bool reuse = stored.patterns && stored.patterns->convention == cfg.pattern_convention;
  std::optional<Dataset> pdata;
  if (needs_patterns(cfg.methods)) {
    pdata = reuse ? pattern_data(data, stored, o.pattern_samples) : head(data.load("train"), o.pattern_samples);
  }

  if (!o.heatmaps.empty()) {
    fs::create_directories(o.heatmaps);
    cfg.on_maps = [&](const SaliencyMap& a, const SaliencyMap& b) {
      const std::string stem = a.method.str() + "_" + std::to_string(a.sample);
      render_heatmap(a.values, fs::path(o.heatmaps) / (stem + "_net1.pgm"));
      render_heatmap(b.values, fs::path(o.heatmaps) / (stem + "_net2.pgm"));
      write_vector(fs::path(o.heatmaps) / (stem + "_net1.vec"), a.values);
      write_vector(fs::path(o.heatmaps) / (stem + "_net2.vec"), b.values);
    };
  }

  const ShiftVector shift = parse_shift(o.shift, stored.model.input_dim());
  const AuditReport report = run_audit(stored.model, shift, test, cfg, pdata ? &*pdata : nullptr,
                                       reuse ? &*stored.patterns : nullptr);
  write_report(report, o.report);
  for (const auto& m : report.methods) {
    std::printf("%-12s max|diff| %-12.4g pearson %-8.4f spearman %-8.4f %s\n", m.id.c_str(), m.max_linf_diff,
                m.mean_pearson, m.mean_spearman, std::string(to_string(m.verdict)).c_str());
  }
  return 0;
}

struct AttackOptions {
  std::string model, target, out_shift, report, methods;
  std::size_t input_index = 0, pattern_samples = 10000;
  double clip = 0.3, eps = 1e-6, target_scale = 0.0;
  int ig_steps = 300;
};

int cmd_attack(const DataOptions& data, const AttackOptions& o) {
  const StoredModel stored = load_model(o.model);
  const Dataset test = data.load("test");
  const Tensor target = read_pgm_unit(o.target);
  if (target.size() != kImagePixels) throw DimensionError("attack target must be a 28x28 graymap");
  const auto methods = o.methods.empty() ? attack_methods() : parse_methods(o.methods);
  const Dataset pdata = needs_patterns(methods) ? pattern_data(data, stored, o.pattern_samples) : Dataset{};
  ShiftVector shift;
  const AttackReport rep = run_attack(stored.model, test, o.input_index, target, o.clip, o.eps, o.target_scale,
                                      pdata, methods, o.ig_steps, &shift);
  write_vector(o.out_shift, shift.values);
  write_attack_report(rep, o.report);
  std::printf("output class %zu, coverage %.4f, masked error %.3g\n", rep.output, rep.verification.coverage,
              rep.verification.masked_linf_error);
  for (const auto& m : rep.methods) {
    std::printf("%-10s corr(target) %-8.4f corr(original) %-8.4f %s\n", m.id.c_str(), m.pearson_target,
                m.pearson_original, m.shows_target() ? "shows target" : "unchanged");
  }
  return 0;
}

int cmd_make_synthetic(const std::string& out, std::size_t n_train, std::size_t n_test) {
  fs::create_directories(out);
  auto write_split = [&](const std::string& prefix, std::size_t n, std::uint64_t seed) {
    const RawDigits raw = make_synthetic_raw(n, seed);
    Tensor labels({n});
    for (std::size_t i = 0; i < n; ++i) labels[i] = raw.labels[i];
    write_idx(fs::path(out) / (prefix + "-images-idx3-ubyte"), raw.images);
    write_idx(fs::path(out) / (prefix + "-labels-idx1-ubyte"), labels);
  };
  write_split("train", n_train, kSyntheticTrainSeed);
  write_split("t10k", n_test, kSyntheticTestSeed);
  std::cout << "wrote " << n_train << " training and " << n_test << " test images to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Input-invariance audits of saliency methods on ReLU MLPs"};
  app.require_subcommand(1);
  int status = 0;

  DataOptions train_data;
  std::string arch = "784,1024,1024,1024,10", out;
  int epochs = 10;
  double lr = 0.05;
  std::size_t batch = 32, train_pattern_samples = 10000;
  std::uint64_t seed = 1;
  auto* train = app.add_subcommand("train", "Train an MLP with SGD and store it with its patterns");
  train_data.add_to(train, true);
  train->add_option("--arch", arch, "Comma-separated layer widths")->capture_default_str();
  train->add_option("--epochs", epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "Learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--batch", batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--pattern-samples", train_pattern_samples, "Training samples used for pattern statistics")
      ->capture_default_str();
  train->add_option("--out", out, "Model file")->required();
  train->callback([&] {
    status = cmd_train(train_data, arch, epochs, lr, batch, seed, train_pattern_samples, out);
  });

  DataOptions audit_data;
  AuditOptions ao;
  auto* audit = app.add_subcommand("audit", "Compare saliency maps of a model and its shifted twin");
  audit_data.add_to(audit, true);
  audit->add_option("--model", ao.model)->required();
  audit->add_option("--shift", ao.shift, "const:V | checker:CELL:AMP | image:PATH:SCALE | file:PATH")->required();
  audit->add_option("--methods", ao.methods, "Comma-separated method ids or 'all'")->capture_default_str();
  audit->add_option("--samples", ao.samples)->capture_default_str();
  audit->add_option("--seed", ao.seed)->capture_default_str();
  audit->add_option("--report", ao.report)->required();
  audit->add_option("--heatmaps", ao.heatmaps, "Directory for per-sample graymaps and map dumps");
  audit->add_option("--ig-steps", ao.ig_steps)->capture_default_str()->check(CLI::PositiveNumber);
  audit->add_option("--sg-samples", ao.sg_samples)->capture_default_str()->check(CLI::PositiveNumber);
  audit->add_option("--sg-sigma", ao.sg_sigma, "Default: 0.15 of the input range");
  audit->add_option("--pattern-convention", ao.convention, "positive-regime | global")->capture_default_str();
  audit->add_option("--pattern-samples", ao.pattern_samples,
                    "Training samples for pattern statistics when the model stores none")
      ->capture_default_str();
  audit->add_flag("--dtd-bias", ao.dtd_bias, "Include the bias in the z-rule denominator");
  audit->callback([&] { status = cmd_audit(audit_data, ao); });

  DataOptions attack_data;
  AttackOptions to;
  attack_data.source = "synthetic";
  auto* attack = app.add_subcommand("attack", "Build a shift that forces a chosen gradient x input map");
  attack_data.add_to(attack, false);
  attack->add_option("--model", to.model)->required();
  attack->add_option("--input-index", to.input_index, "Test-split sample index")->required();
  attack->add_option("--target", to.target, "28x28 P5 graymap")->required();
  attack->add_option("--clip", to.clip)->capture_default_str();
  attack->add_option("--eps", to.eps)->capture_default_str();
  attack->add_option("--target-scale", to.target_scale, "Default: peak of the sample's own map")
      ->capture_default_str();
  attack->add_option("--methods", to.methods, "Methods compared on the twins (default gxi,ig-black,ig-zero,"
                                              "dtd-lrp,dtd-pa)");
  attack->add_option("--ig-steps", to.ig_steps)->capture_default_str()->check(CLI::PositiveNumber);
  attack->add_option("--pattern-samples", to.pattern_samples)->capture_default_str();
  attack->add_option("--out-shift", to.out_shift)->required();
  attack->add_option("--report", to.report)->required();
  attack->callback([&] { status = cmd_attack(attack_data, to); });

  std::string map_path, pgm_out;
  auto* render = app.add_subcommand("render", "Render a map dump as a 28x28 graymap");
  render->add_option("--map", map_path)->required();
  render->add_option("--out", pgm_out)->required();
  render->callback([&] { render_heatmap(read_vector(map_path), pgm_out); });

  std::string synth_out;
  std::size_t synth_train = 10000, synth_test = 2000;
  auto* synth = app.add_subcommand("make-synthetic", "Write the synthetic corpus as MNIST-style IDX files");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--train", synth_train)->capture_default_str();
  synth->add_option("--test", synth_test)->capture_default_str();
  synth->callback([&] { status = cmd_make_synthetic(synth_out, synth_train, synth_test); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
