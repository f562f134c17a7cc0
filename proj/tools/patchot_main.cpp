// patchot: texture synthesis, inpainting and patch-distribution distance
// from the command line.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "patchot/patchot.hpp"
#include "png_io.hpp"

namespace {

using nlohmann::json;
using namespace patchot;

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kBadInput = 2, kInfeasible = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dims parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_h = 0, used_w = 0;
    const unsigned long h = std::stoul(text.substr(0, x), &used_h);
    const unsigned long w = std::stoul(text.substr(x + 1), &used_w);
    if (used_h != x || used_w != text.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--size expects HxW with positive integers, got '" + text + "'");
  }
}

/// Options that may also come from a JSON config file. A value given on the
/// command line wins over the file, which wins over the built-in default.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& key, T& value, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + key, value, help);
    if constexpr (!std::is_same_v<T, std::string>) opt->capture_default_str();
    entries_.push_back({key, [opt, key, &value](const json& file) {
                          if (opt->count() == 0 && file.contains(key)) value = file.at(key).get<T>();
                        }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& value, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + key, value, help);
    entries_.push_back({key, [opt, key, &value](const json& file) {
                          if (opt->count() == 0 && file.contains(key)) value = file.at(key).get<bool>();
                        }});
    return opt;
  }

  void add_config_option() {
    app_->add_option("--config", config_path_,
                     "JSON file with option values (keys are flag names without dashes); a run "
                     "manifest is accepted too");
  }

  /// Applies the config file, if any, under the command-line values.
  void resolve() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw io::InputError("cannot read config '" + config_path_ + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw io::InputError("cannot parse config '" + config_path_ + "': " + e.what());
    }
    if (doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
    if (!doc.is_object()) throw io::InputError("config '" + config_path_ + "' is not a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const bool known = std::any_of(entries_.begin(), entries_.end(),
                                     [&](const Entry& e) { return e.key == it.key(); });
      if (!known) throw UsageError("config '" + config_path_ + "': unknown key '" + it.key() + "'");
    }
    for (const auto& e : entries_) {
      try {
        e.apply(doc);
      } catch (const json::exception&) {
        throw UsageError("config '" + config_path_ + "': bad value for '" + e.key + "'");
      }
    }
  }

  const std::string& config_path() const { return config_path_; }

 private:
  struct Entry {
    std::string key;
    std::function<void(const json&)> apply;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
  std::string config_path_;
};

/// Flag values shared by synth and inpaint.
struct SolverArgs {
  std::string out;
  std::string trace;
  std::string manifest;
  std::size_t patch_size = 4;
  std::size_t scales = 0;
  std::size_t iters = 200;
  std::size_t dual_iters = 100;
  double dual_step = 0.8;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool reset_dual = false;
  std::size_t max_targets = 0;
  unsigned threads = 0;
  bool f64 = false;
  bool verbose = false;

  void register_options(Settings& s) {
    s.option("out", out, "Output PNG");
    s.option("trace", trace, "Loss trace CSV (default: <out>.trace.csv)");
    s.option("manifest", manifest, "Run manifest JSON (default: <out>.manifest.json)");
    s.option("patch-size", patch_size, "Patch side s");
    s.option("scales", scales, "Number of pyramid scales L (0 = derived from the image size)");
    s.option("iters", iters, "Outer iterations");
    s.option("dual-iters", dual_iters, "Dual ascent iterations per scale and outer iteration");
    s.option("dual-step", dual_step, "Dual ascent step at iteration k is dual-step / sqrt(k)");
    s.option("lr", lr, "Adam learning rate");
    s.option("beta1", beta1, "Adam first-moment decay");
    s.option("beta2", beta2, "Adam second-moment decay");
    s.option("adam-eps", adam_eps, "Adam epsilon");
    s.option("seed", seed, "Random seed");
    s.flag("reset-dual", reset_dual, "Restart every dual ascent from zero instead of warm starting");
    s.option("max-targets", max_targets, "Random subset of target patches per scale (0 = all)");
    s.option("threads", threads, "Worker threads (0 = PATCHOT_THREADS or all cores)");
    s.flag("f64", f64, "Compute in double precision");
    s.flag("verbose", verbose, "Print per-iteration losses to stderr");
  }

  SynthesisConfig config() const {
    SynthesisConfig cfg;
    cfg.patch_size = patch_size;
    cfg.num_scales = scales;
    cfg.outer_iters = iters;
    cfg.dual_iters = dual_iters;
    cfg.dual_step0 = dual_step;
    cfg.adam_lr = lr;
    cfg.adam_beta1 = beta1;
    cfg.adam_beta2 = beta2;
    cfg.adam_eps = adam_eps;
    cfg.seed = seed;
    cfg.warm_start_dual = !reset_dual;
    cfg.max_target_patches = max_targets;
    return cfg;
  }

  /// Derives unset trace and manifest paths from --out. The manifest keeps
  /// the values as given, so re-running it with another --out moves them too.
  void fill_default_paths() {
    if (out.empty()) throw UsageError("--out is required");
    given_trace_ = trace;
    given_manifest_ = manifest;
    std::filesystem::path base(out);
    base.replace_extension();
    if (trace.empty()) trace = base.string() + ".trace.csv";
    if (manifest.empty()) manifest = base.string() + ".manifest.json";
  }

  json outputs() const { return {{"image", out}, {"trace", trace}, {"manifest", manifest}}; }

  json to_json() const {
    return {{"out", out},
            {"trace", given_trace_},
            {"manifest", given_manifest_},
            {"patch-size", patch_size},
            {"scales", scales},
            {"iters", iters},
            {"dual-iters", dual_iters},
            {"dual-step", dual_step},
            {"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam-eps", adam_eps},
            {"seed", seed},
            {"reset-dual", reset_dual},
            {"max-targets", max_targets},
            {"threads", threads},
            {"f64", f64},
            {"verbose", verbose}};
  }

 private:
  std::string given_trace_;
  std::string given_manifest_;
};

/// Sizes the worker pool; returns the thread count in effect.
unsigned apply_threads(unsigned threads) {
  if (threads > 0) set_num_threads(threads);
  return num_threads();
}

IterationCallback verbose_logger(bool verbose) {
  if (!verbose) return {};
  return [](const LossRecord& r) {
    std::cerr << "iter " << r.iteration << "  loss " << format_real(r.total) << "  [";
    for (std::size_t l = 0; l < r.per_scale.size(); ++l) {
      std::cerr << (l ? " " : "") << format_real(r.per_scale[l]);
    }
    std::cerr << "]  " << static_cast<long long>(r.elapsed_ms) << " ms\n";
  };
}

void write_trace(const std::string& path, const LossTrace& trace, std::size_t levels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::OutputError("cannot write trace '" + path + "'");
  out << "iter,total_loss";
  for (std::size_t l = 1; l <= levels; ++l) out << ",loss_scale_" << l;
  out << ",elapsed_ms\n";
  char ms[32];
  for (const auto& r : trace.records) {
    out << r.iteration << ',' << format_real(r.total);
    for (double v : r.per_scale) out << ',' << format_real(v);
    std::snprintf(ms, sizeof ms, "%.3f", r.elapsed_ms);
    out << ',' << ms << '\n';
  }
  if (!out) throw io::OutputError("cannot write trace '" + path + "'");
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::OutputError("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw io::OutputError("cannot write '" + path + "'");
}

json input_entry(const std::string& role, const std::string& path) {
  return {{"role", role}, {"path", path}, {"sha256", io::sha256_file(path)}};
}

template <class Real>
json loss_summary(const SynthesisResult<Real>& res) {
  return {{"final_loss", res.trace.back().total},
          {"final_loss_per_scale", res.trace.back().per_scale},
          {"initial_loss", res.trace.front().total}};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string exemplar;
  std::string size;
  std::string init = "noise";
  std::string init_image;
  SolverArgs solver;
};

template <class Real>
int run_synth(SynthArgs& a) {
  const std::string started = utc_now();
  const io::Raster ex_raster = io::read_png(a.exemplar);
  const Image<Real> exemplar = io::to_image<Real>(ex_raster);
  const Dims out_dims = a.size.empty() ? exemplar.dims() : parse_size(a.size);
  SynthesisConfig cfg = a.solver.config();
  std::optional<Image<Real>> initial;
  json inputs = json::array({input_entry("exemplar", a.exemplar)});
  if (a.init == "provided") {
    if (a.init_image.empty()) throw UsageError("--init provided needs --init-image");
    initial = io::to_image<Real>(io::read_png(a.init_image));
    cfg.init = InitMode::provided;
    inputs.push_back(input_entry("init-image", a.init_image));
  } else if (a.init != "noise") {
    throw UsageError("--init must be 'noise' or 'provided'");
  }
  cfg.num_scales = resolve_num_scales(cfg, exemplar.dims(), out_dims);
  a.solver.scales = cfg.num_scales;
  a.size = to_string(out_dims);

  const auto res = synthesize(exemplar, out_dims, cfg, initial, verbose_logger(a.solver.verbose));
  io::write_png(a.solver.out, io::to_raster(res.image));
  write_trace(a.solver.trace, res.trace, res.num_scales);

  json config = a.solver.to_json();
  config["exemplar"] = a.exemplar;
  config["size"] = a.size;
  config["init"] = a.init;
  config["init-image"] = a.init_image;
  json manifest = {{"tool", "patchot"},
                   {"version", kVersion},
                   {"command", "synth"},
                   {"config", config},
                   {"inputs", inputs},
                   {"outputs", a.solver.outputs()},
                   {"seed", cfg.seed},
                   {"started_at", started},
                   {"finished_at", utc_now()}};
  manifest.update(loss_summary(res));
  write_json(a.solver.manifest, manifest);
  return kOk;
}

// -------------------------------------------------------------- inpaint

struct InpaintArgs {
  std::string image;
  std::string mask;
  SolverArgs solver;
};

template <class Real>
int run_inpaint(InpaintArgs& a) {
  const std::string started = utc_now();
  const Image<Real> image = io::to_image<Real>(io::read_png(a.image));
  const io::Raster mask_raster = io::read_png(a.mask);
  const Dims mask_dims{mask_raster.height, mask_raster.width};
  if (mask_dims != image.dims()) {
    throw std::invalid_argument("mask '" + a.mask + "' is " + to_string(mask_dims) + " but image '" +
                                a.image + "' is " + to_string(image.dims()));
  }
  std::vector<bool> unknown(mask_dims.pixels(), false);
  for (std::size_t p = 0; p < unknown.size(); ++p) {
    for (std::size_t c = 0; c < mask_raster.channels; ++c) {
      if (mask_raster.bytes[p * mask_raster.channels + c] != 0) unknown[p] = true;
    }
  }
  const Mask mask(mask_dims, std::move(unknown));
  SynthesisConfig cfg = a.solver.config();
  cfg.num_scales = resolve_num_scales(cfg, image.dims(), image.dims());
  a.solver.scales = cfg.num_scales;

  const auto res = inpaint(image, mask, cfg, verbose_logger(a.solver.verbose));
  io::write_png(a.solver.out, io::to_raster(res.image));
  write_trace(a.solver.trace, res.trace, res.num_scales);

  json config = a.solver.to_json();
  config["image"] = a.image;
  config["mask"] = a.mask;
  json manifest = {{"tool", "patchot"},
                   {"version", kVersion},
                   {"command", "inpaint"},
                   {"config", config},
                   {"inputs", json::array({input_entry("image", a.image), input_entry("mask", a.mask)})},
                   {"outputs", a.solver.outputs()},
                   {"seed", cfg.seed},
                   {"unknown_pixels", mask.count_unknown()},
                   {"started_at", started},
                   {"finished_at", utc_now()}};
  manifest.update(loss_summary(res));
  write_json(a.solver.manifest, manifest);
  return kOk;
}

// --------------------------------------------------------------- metric

struct MetricArgs {
  std::string candidate;
  std::string reference;
  std::size_t patch_size = 4;
  std::size_t scales = 0;
  std::size_t dual_iters = kMetricDualIters;
  double dual_step = 0.8;
  std::string csv;
  unsigned threads = 0;
  bool f64 = false;
};

template <class Real>
int run_metric(const MetricArgs& a) {
  const Image<Real> cand = io::to_image<Real>(io::read_png(a.candidate));
  const Image<Real> ref = io::to_image<Real>(io::read_png(a.reference));
  const std::size_t levels =
      a.scales ? a.scales : default_num_scales({cand.dims(), ref.dims()}, a.patch_size);
  const MetricReport r = ot_metric(cand, ref, a.patch_size, levels, a.dual_iters, a.dual_step);
  const json report = {{"candidate", a.candidate},     {"reference", a.reference},
                       {"per_scale", r.per_scale},     {"total", r.total},
                       {"direction", r.direction},     {"patch_size", r.patch_size},
                       {"num_scales", r.num_scales},   {"dual_iters", r.dual_iters},
                       {"dual_step", r.dual_step0},    {"precision", a.f64 ? "f64" : "f32"}};
  std::cout << report.dump(2) << std::endl;
  if (!a.csv.empty()) {
    const bool fresh = !std::filesystem::exists(a.csv) || std::filesystem::file_size(a.csv) == 0;
    std::ofstream out(a.csv, std::ios::binary | std::ios::app);
    if (!out) throw io::OutputError("cannot append to '" + a.csv + "'");
    if (fresh) {
      out << "candidate,reference,total";
      for (std::size_t l = 1; l <= levels; ++l) out << ",scale_" << l;
      out << '\n';
    }
    out << a.candidate << ',' << a.reference << ',' << format_real(r.total);
    for (double v : r.per_scale) out << ',' << format_real(v);
    out << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-based texture synthesis, inpainting and texture distance with semi-dual "
               "optimal transport"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Synthesize a texture from an exemplar");
  Settings synth_settings(synth_cmd);
  synth_settings.add_config_option();
  synth_settings.option("exemplar", synth.exemplar, "Exemplar PNG");
  synth_settings.option("size", synth.size, "Output size HxW (default: exemplar size)");
  synth_settings.option("init", synth.init, "Initialization: noise or provided");
  synth_settings.option("init-image", synth.init_image, "Initial image PNG for --init provided");
  synth.solver.register_options(synth_settings);

  InpaintArgs inp;
  CLI::App* inpaint_cmd = app.add_subcommand("inpaint", "Fill the masked region of an image");
  Settings inpaint_settings(inpaint_cmd);
  inpaint_settings.add_config_option();
  inpaint_settings.option("image", inp.image, "Image PNG");
  inpaint_settings.option("mask", inp.mask, "Mask PNG, nonzero marks pixels to fill");
  inp.solver.register_options(inpaint_settings);

  MetricArgs met;
  CLI::App* metric_cmd = app.add_subcommand("metric", "Multiscale OT distance between two textures");
  metric_cmd->add_option("--candidate", met.candidate, "Candidate PNG (source side)")->required();
  metric_cmd->add_option("--reference", met.reference, "Reference PNG (target side)")->required();
  metric_cmd->add_option("--patch-size", met.patch_size, "Patch side s")->capture_default_str();
  metric_cmd->add_option("--scales", met.scales, "Pyramid scales (0 = derived from the image sizes)")
      ->capture_default_str();
  metric_cmd->add_option("--dual-iters", met.dual_iters, "Dual ascent iterations per scale")
      ->capture_default_str();
  metric_cmd->add_option("--dual-step", met.dual_step, "Initial dual ascent step")->capture_default_str();
  metric_cmd->add_option("--csv", met.csv, "Append a result row to this CSV file");
  metric_cmd->add_option("--threads", met.threads, "Worker threads (0 = PATCHOT_THREADS or all cores)");
  metric_cmd->add_flag("--f64", met.f64, "Compute in double precision");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      synth_settings.resolve();
      if (synth.exemplar.empty()) throw UsageError("--exemplar is required");
      synth.solver.fill_default_paths();
      synth.solver.threads = apply_threads(synth.solver.threads);
      return synth.solver.f64 ? run_synth<double>(synth) : run_synth<float>(synth);
    }
    if (inpaint_cmd->parsed()) {
      inpaint_settings.resolve();
      if (inp.image.empty() || inp.mask.empty()) throw UsageError("--image and --mask are required");
      inp.solver.fill_default_paths();
      inp.solver.threads = apply_threads(inp.solver.threads);
      return inp.solver.f64 ? run_inpaint<double>(inp) : run_inpaint<float>(inp);
    }
    apply_threads(met.threads);
    return met.f64 ? run_metric<double>(met) : run_metric<float>(met);
  } catch (const UsageError& e) {
    std::cerr << "patchot: " << e.what() << '\n';
    return kUsage;
  } catch (const io::InputError& e) {
    std::cerr << "patchot: " << e.what() << '\n';
    return kBadInput;
  } catch (const io::OutputError& e) {
    std::cerr << "patchot: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "patchot: " << e.what() << '\n';
    return kInfeasible;
  }
}
