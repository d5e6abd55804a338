#include "cli_commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bf/classifier.hpp"
#include "bf/dataset.hpp"
#include "bf/detection.hpp"
#include "bf/error.hpp"
#include "bf/metrics.hpp"
#include "bf/pipeline.hpp"
#include "bf/png_io.hpp"
#include "bf/poisoning.hpp"
#include "bf/recovery.hpp"
#include "bf/report.hpp"
#include "bf/rng.hpp"
#include "bf/synthetic.hpp"
#include "bf/tensor_io.hpp"
#include "bf/vlm_client.hpp"

namespace bf::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

using Clock = std::chrono::steady_clock;

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string format = "json";
  std::vector<std::string> argv;
};

// ---- input hashing and run manifests ----

std::string hex64(std::uint64_t h) {
  return fmt::format("{:016x}", h);
}

std::uint64_t hash_bytes(std::uint64_t h, const std::vector<std::uint8_t>& bytes) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// FNV-1a over a file, or over every regular file of a directory (relative
// path then contents, in sorted order).
std::string hash_path(const fs::path& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file() && e.path().filename() != "run_manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, p).generic_string();
      h = hash_bytes(h, std::vector<std::uint8_t>(rel.begin(), rel.end()));
      h = hash_bytes(h, read_file_bytes(f));
    }
  } else {
    h = hash_bytes(h, read_file_bytes(p));
  }
  return hex64(h);
}

class Manifest {
public:
  Manifest(std::string command, const Globals& g) : start_(Clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = g.argv;
    j_["version"] = kVersion;
    j_["seeds"] = {{"root", g.seed}};
    j_["threads"] = g.threads;
    j_["config"] = Json::object();
    j_["inputs"] = Json::object();
  }

  Json& config() { return j_["config"]; }
  void seed(const std::string& stage, std::uint64_t value) { j_["seeds"][stage] = value; }
  void input(const std::string& key, const fs::path& p) {
    j_["inputs"][key] = {{"path", p.string()}, {"fnv1a64", hash_path(p)}};
  }
  void write(const fs::path& path) {
    j_["timings"] = {{"wall_seconds", std::chrono::duration<double>(Clock::now() - start_).count()}};
    write_json(path, j_);
  }

private:
  Json j_;
  Clock::time_point start_;
};

fs::path sidecar_manifest(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

void emit(const std::string& text, const std::string& out_path) {
  std::cout << text;
  if (!text.empty() && text.back() != '\n') std::cout << '\n';
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw RuntimeError(fmt::format("cannot write '{}'", out_path));
    f << text;
  }
}

// ---- detector list ----

struct RemoteOptions {
  int timeout_ms = 10000;
  std::uint32_t retries = 2;
  bool cache = false;
};

struct DetectorOptions {
  std::vector<std::string> specs;
  std::uint32_t threshold = 0;
  double residual_threshold = 0.35;
  RemoteOptions remote;
};

double parse_rate(const std::string& text, const std::string& spec) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("invalid rate '{}' in detector '{}'", text, spec));
  }
}

// Accepts "oracle", "residual[:t]", "simulated:<fpr>,<fnr>", "remote:<url>",
// comma separated and/or repeated.
EnsembleConfig build_ensemble(const DetectorOptions& opt, std::uint64_t detect_seed, const Dataset* reference) {
  std::vector<std::string> tokens;
  for (const auto& s : opt.specs) {
    std::size_t start = 0;
    while (start <= s.size()) {
      const auto comma = s.find(',', start);
      const auto tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!tok.empty()) tokens.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (tokens.empty()) throw ValidationError("--detectors needs at least one detector");

  EnsembleConfig cfg;
  cfg.threshold = opt.threshold;
  std::size_t simulated = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t == "oracle") {
      cfg.detectors.push_back(make_oracle_detector());
    } else if (t == "residual" || t.starts_with("residual:")) {
      if (!reference) throw ValidationError("residual detector needs a dataset to build prototypes");
      const double thr = t == "residual" ? opt.residual_threshold : parse_rate(t.substr(9), t);
      cfg.detectors.push_back(std::make_shared<ResidualDetector>(class_medians(*reference), thr));
    } else if (t.starts_with("simulated:")) {
      if (i + 1 >= tokens.size()) throw ValidationError(fmt::format("detector '{}' needs <fpr>,<fnr>", t));
      const std::string spec = t + "," + tokens[i + 1];
      DetectorProfile p;
      p.false_positive_rate = parse_rate(t.substr(10), spec);
      p.false_negative_rate = parse_rate(tokens[++i], spec);
      p.seed = stage_seed(detect_seed, fmt::format("simulated{}", simulated++));
      cfg.detectors.push_back(std::make_shared<SimulatedDetector>(p));
    } else if (t.starts_with("remote:")) {
      RemoteDetectorConfig rc;
      rc.endpoint_url = t.substr(7);
      rc.timeout = std::chrono::milliseconds(opt.remote.timeout_ms);
      rc.max_retries = opt.remote.retries;
      rc.cache = opt.remote.cache;
      apply_auth_from_env(rc);
      cfg.detectors.push_back(std::make_shared<RemoteDetector>(rc));
    } else {
      throw ValidationError(fmt::format("unknown detector '{}'", t));
    }
  }
  cfg.validate();
  return cfg;
}

void add_detector_options(CLI::App* cmd, DetectorOptions& o, bool required) {
  auto* d = cmd->add_option("--detectors", o.specs,
                            "comma list: oracle, residual[:t], simulated:<fpr>,<fnr>, remote:<url>")
                ->delimiter('\0');
  if (required) d->required();
  cmd->add_option("--threshold", o.threshold, "poisoned votes needed (0 = ceil(M/2))");
  cmd->add_option("--residual-threshold", o.residual_threshold, "l-inf residual above which 'residual' flags");
  cmd->add_option("--timeout-ms", o.remote.timeout_ms, "remote detector timeout per attempt")->check(CLI::PositiveNumber);
  cmd->add_option("--retries", o.remote.retries, "remote detector retries");
  cmd->add_flag("--cache", o.remote.cache, "cache remote verdicts by image hash");
}

Json detector_config_json(const DetectorOptions& o) {
  return {{"detectors", o.specs},
          {"threshold", o.threshold},
          {"residual_threshold", o.residual_threshold},
          {"timeout_ms", o.remote.timeout_ms},
          {"retries", o.remote.retries},
          {"cache", o.remote.cache}};
}

// ---- recovery / training options ----

struct RecoveryOptions {
  std::uint32_t steps = 200;
  double delta = 0.05;
  std::string budget_mode = "global_max";
  double p = 95.0;
  bool early_stop = false;
  std::string budget_path;
};

void add_recovery_options(CLI::App* cmd, RecoveryOptions& o) {
  cmd->add_option("--steps", o.steps, "PGD steps T (probe and correction)")->check(CLI::PositiveNumber);
  cmd->add_option("--delta", o.delta, "safety margin on the probed magnitude")->check(CLI::NonNegativeNumber);
  cmd->add_option("--budget-mode", o.budget_mode, "global_max | percentile | per_image_capped")
      ->check(CLI::IsMember({"global_max", "percentile", "per_image_capped"}));
  cmd->add_option("--p", o.p, "percentile for --budget-mode percentile");
  cmd->add_flag("--early-stop", o.early_stop, "stop once the label is restored");
  cmd->add_option("--budget", o.budget_path, "persisted budget JSON (skips the probe)")->check(CLI::ExistingFile);
}

RecoveryConfig to_recovery_config(const RecoveryOptions& o) {
  RecoveryConfig c;
  c.steps = o.steps;
  c.safety_margin = o.delta;
  c.budget_mode = budget_mode_from_string(o.budget_mode);
  c.percentile = o.p;
  c.early_stop = o.early_stop;
  c.validate();
  return c;
}

Json recovery_config_json(const RecoveryOptions& o) {
  Json j{{"steps", o.steps},
         {"delta", o.delta},
         {"budget_mode", to_recovery_config(o).mode_label()},
         {"early_stop", o.early_stop}};
  if (o.budget_mode == "percentile") j["p"] = o.p;
  if (!o.budget_path.empty()) j["budget"] = o.budget_path;
  return j;
}

struct TrainOptions {
  std::string arch = "mlp1";
  std::uint32_t hidden = 64;
  std::uint32_t epochs = 60;
  double lr = 0.1;
  std::uint32_t batch = 16;
  double l2 = 0.0;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--arch", o.arch, "linear | mlp1")->check(CLI::IsMember({"linear", "mlp1"}));
  cmd->add_option("--hidden", o.hidden, "hidden width for mlp1")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "SGD learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
  cmd->add_option("--l2", o.l2, "weight decay")->check(CLI::NonNegativeNumber);
}

TrainConfig to_train_config(const TrainOptions& o, std::uint64_t seed) {
  TrainConfig c;
  c.architecture = architecture_from_string(o.arch);
  c.hidden = o.hidden;
  c.epochs = o.epochs;
  c.learning_rate = o.lr;
  c.batch_size = o.batch;
  c.l2_penalty = o.l2;
  c.seed = seed;
  return c;
}

Json train_config_json(const TrainOptions& o) {
  return {{"arch", o.arch}, {"hidden", o.hidden}, {"epochs", o.epochs}, {"lr", o.lr}, {"batch", o.batch}, {"l2", o.l2}};
}

// ---- artifact writers ----

void write_recovered_images(const fs::path& dir, const Dataset& input,
                            std::span<const std::pair<std::size_t, RecoveryResult>> recoveries) {
  fs::create_directories(dir);
  for (const auto& [index, r] : recoveries) {
    const std::string stem = fmt::format("{:06d}", index);
    write_image(dir / (stem + ".bft"), r.recovered);
    write_png(dir / (stem + ".png"), r.recovered);
    write_png(dir / (stem + "_heatmap.png"), perturbation_heatmap(r.recovered, input[index].image));
  }
}

std::vector<DetectionRecord> all_flagged(const Dataset& data) {
  std::vector<DetectionRecord> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i].index = i;
    out[i].truth = data[i].provenance;
    out[i].aggregate = Verdict::poison("no detections supplied; every sample is corrected");
    out[i].votes = {out[i].aggregate};
  }
  return out;
}

Json counts_summary(const SanitizationReport& rep) {
  return {{"flagged", rep.counts.flagged},
          {"recovered", rep.counts.recovered},
          {"passed", rep.counts.passed},
          {"failed", rep.counts.failed},
          {"success_rate", rep.success_rate()},
          {"epsilon", rep.budget ? Json(rep.budget->epsilon) : Json(nullptr)}};
}

PatchTrigger trigger_from_plan(const PoisonPlan& plan) {
  if (!plan.patch) throw ValidationError("plan has no patch trigger; attack success needs one");
  return *plan.patch;
}

// ---- subcommands ----

struct GenArgs {
  std::string out;
  std::uint32_t classes = 3;
  std::uint32_t per_class = 100;
  std::uint32_t height = 8, width = 8, channels = 3;
  double sigma = 0.05;
  std::string split = "train";
};

void cmd_gen(const GenArgs& a, const Globals& g) {
  Manifest m("gen", g);
  SyntheticSpec spec;
  spec.num_classes = a.classes;
  spec.per_class = a.per_class;
  spec.dims = Shape{a.height, a.width, a.channels};
  spec.noise_sigma = a.sigma;
  spec.seed = stage_seed(g.seed, "gen");
  const std::uint64_t sample_seed = a.split == "train" ? spec.seed : stage_seed(spec.seed, a.split);
  const Dataset data = gen_synthetic_identities(spec, sample_seed);
  write_dataset(a.out, data);
  m.seed("gen", spec.seed);
  m.seed("samples", sample_seed);
  m.config() = {{"classes", a.classes}, {"per_class", a.per_class}, {"dims", spec.dims.str()},
                {"sigma", a.sigma},     {"split", a.split},         {"out", a.out}};
  m.write(fs::path(a.out) / "run_manifest.json");
  emit(Json{{"samples", data.size()}, {"classes", data.num_classes()}, {"shape", data.shape().str()}}.dump(), "");
}

struct PoisonArgs {
  std::string in, out, method = "patch", model, relabel = "auto";
  std::uint32_t source = 0, target = 1;
  double rate = 0.1;
  std::uint32_t patch_size = 3;
  double amplitude = 0.5;
  float opacity = 1.0f;
  int row = -1, col = -1;
  double pixel_budget = 16.0 / 255.0;
  std::uint32_t hidden_steps = 100;
  double hidden_step_size = 0.01;
};

void cmd_poison(const PoisonArgs& a, const Globals& g) {
  Manifest m("poison", g);
  m.input("in", a.in);
  const Dataset data = read_dataset(a.in);
  const Shape dims = data.shape();
  if (a.patch_size == 0 || a.patch_size > dims.height || a.patch_size > dims.width)
    throw ValidationError(fmt::format("patch size {} does not fit {}", a.patch_size, dims.str()));
  const std::uint32_t row = a.row < 0 ? dims.height - a.patch_size : static_cast<std::uint32_t>(a.row);
  const std::uint32_t col = a.col < 0 ? dims.width - a.patch_size : static_cast<std::uint32_t>(a.col);

  PoisonRequest req;
  req.method = poison_method_from_string(a.method);
  req.source_class = a.source;
  req.target_class = a.target;
  req.rate = a.rate;
  if (a.relabel != "auto") req.relabel_to_target = a.relabel == "true";
  req.patch = PatchTrigger{make_checkerboard_pattern(a.patch_size, dims.channels, a.amplitude), row, col, a.opacity};
  if (req.method == PoisonMethod::makeup) {
    std::vector<float> pattern(dims.size());
    for (std::uint32_t r = 0; r < dims.height; ++r)
      for (std::uint32_t c = 0; c < dims.width; ++c)
        for (std::uint32_t ch = 0; ch < dims.channels; ++ch)
          pattern[dims.index(r, c, ch)] = static_cast<float>(0.5 + ((r + c) % 2 == 0 ? a.amplitude : -a.amplitude));
    req.makeup = MakeupSpec{make_rect_mask(dims, row, col, a.patch_size, a.patch_size),
                            Image::clipped(dims, std::move(pattern))};
  }
  req.hidden = HiddenTriggerConfig{a.pixel_budget, a.hidden_steps, a.hidden_step_size};

  std::optional<Model> model;
  if (req.method == PoisonMethod::hidden_trigger) {
    if (a.model.empty()) throw ValidationError("--method hidden needs --model");
    m.input("model", a.model);
    model = Model::load(a.model);
  }
  const PoisonPlan plan = make_poison_plan(data, req);
  const Dataset poisoned = apply_poison_plan(data, plan, model ? &*model : nullptr);
  write_dataset(a.out, poisoned);
  save_poison_plan(fs::path(a.out) / "plan", plan);
  m.config() = {{"method", a.method},  {"source", a.source},     {"target", a.target},
                {"rate", a.rate},      {"patch_size", a.patch_size}, {"amplitude", a.amplitude},
                {"opacity", a.opacity}, {"row", row},            {"col", col},
                {"relabel", a.relabel}, {"out", a.out}};
  m.write(fs::path(a.out) / "run_manifest.json");
  emit(Json{{"poisoned", plan.entries.size()}, {"method", a.method}, {"plan", (fs::path(a.out) / "plan").string()}}.dump(),
       "");
}

struct TrainArgs {
  std::string in, out, detections;
  TrainOptions opt;
};

void cmd_train(const TrainArgs& a, const Globals& g) {
  Manifest m("train", g);
  m.input("in", a.in);
  Dataset data = read_dataset(a.in);
  if (!a.detections.empty()) {
    m.input("detections", a.detections);
    data = believed_clean_subset(data, read_detections(a.detections));
  }
  const std::uint64_t seed = stage_seed(g.seed, "train");
  const TrainResult r = train(data, to_train_config(a.opt, seed));
  r.model.save(a.out);
  m.seed("train", seed);
  m.config() = train_config_json(a.opt);
  m.config()["out"] = a.out;
  m.config()["training_samples"] = data.size();
  m.write(sidecar_manifest(a.out));
  emit(Json{{"train_accuracy", r.train_accuracy}, {"final_loss", r.epoch_losses.back()}, {"samples", data.size()}}.dump(),
       "");
}

struct DetectArgs {
  std::string in, out;
  DetectorOptions det;
};

void cmd_detect(const DetectArgs& a, const Globals& g) {
  Manifest m("detect", g);
  m.input("in", a.in);
  const Dataset data = read_dataset(a.in);
  const std::uint64_t seed = stage_seed(g.seed, "detect");
  const EnsembleConfig ens = build_ensemble(a.det, seed, &data);
  const auto records = detect_all(data, ens, g.threads);
  write_detections(a.out, records);
  m.seed("detect", seed);
  m.config() = detector_config_json(a.det);
  m.config()["out"] = a.out;
  m.write(sidecar_manifest(a.out));
  std::size_t flagged = 0;
  for (const auto& r : records) flagged += r.aggregate.poisoned() ? 1 : 0;
  const ConfusionCounts c = confusion(records);
  emit(Json{{"samples", records.size()}, {"flagged", flagged}, {"confusion", confusion_json(c)},
            {"metrics", metrics_json(metrics(c))}}
           .dump(),
       "");
}

struct RecoverArgs {
  std::string in, model, detections, out;
  RecoveryOptions rec;
};

void write_sanitize_outputs(const fs::path& out, const Dataset& input, const SanitizeOutput& s) {
  fs::create_directories(out);
  write_dataset(out / "dataset", s.clean);
  if (s.report.budget) write_json(out / "budget.json", budget_json(*s.report.budget));
  std::vector<RecoveryResult> results;
  std::vector<std::size_t> indices;
  for (const auto& [i, r] : s.recoveries) {
    indices.push_back(i);
    results.push_back(r);
  }
  write_json(out / "recovery_report.json", recovery_report_json(s.report.budget, results, indices));
  write_json(out / "sanitization_report.json", sanitization_report_json(s.report));
  write_recovered_images(out / "recovered", input, s.recoveries);
}

PipelineConfig pipeline_config(const RecoveryOptions& rec, const Globals& g, Manifest& m) {
  PipelineConfig pc;
  pc.recovery = to_recovery_config(rec);
  pc.threads = g.threads;
  if (!rec.budget_path.empty()) {
    m.input("budget", rec.budget_path);
    pc.persisted_budget = budget_from_json(read_json(rec.budget_path));
  }
  return pc;
}

void cmd_recover(const RecoverArgs& a, const Globals& g) {
  Manifest m("recover", g);
  m.input("in", a.in);
  m.input("model", a.model);
  const Dataset data = read_dataset(a.in);
  const Model model = Model::load(a.model);
  std::vector<DetectionRecord> detections;
  if (a.detections.empty()) {
    detections = all_flagged(data);
  } else {
    m.input("detections", a.detections);
    detections = read_detections(a.detections);
  }
  PipelineConfig pc = pipeline_config(a.rec, g, m);
  pc.ensemble.detectors = {make_oracle_detector()}; // unused; votes come from the file
  const SanitizeOutput s = sanitize_with_detections(data, std::move(detections), model, pc);
  write_sanitize_outputs(a.out, data, s);
  m.config() = recovery_config_json(a.rec);
  m.config()["out"] = a.out;
  m.write(fs::path(a.out) / "run_manifest.json");
  emit(counts_summary(s.report).dump(), "");
}

struct SanitizeArgs {
  std::string in, model, out;
  DetectorOptions det;
  RecoveryOptions rec;
  TrainOptions train;
};

void cmd_sanitize(const SanitizeArgs& a, const Globals& g) {
  Manifest m("sanitize", g);
  m.input("in", a.in);
  const Dataset data = read_dataset(a.in);
  const std::uint64_t detect_seed = stage_seed(g.seed, "detect");
  PipelineConfig pc = pipeline_config(a.rec, g, m);
  pc.ensemble = build_ensemble(a.det, detect_seed, &data);
  m.seed("detect", detect_seed);

  SanitizeOutput s = [&] {
    if (!a.model.empty()) {
      m.input("model", a.model);
      return sanitize(data, Model::load(a.model), pc);
    }
    const std::uint64_t train_seed = stage_seed(g.seed, "train");
    m.seed("train", train_seed);
    DefendedRun run = sanitize_untrusted(data, pc, to_train_config(a.train, train_seed));
    fs::create_directories(a.out);
    run.defender.save(fs::path(a.out) / "defender.bfm1");
    return std::move(run.output);
  }();
  write_sanitize_outputs(a.out, data, s);
  write_detections(fs::path(a.out) / "detections.jsonl", s.detections);
  m.config() = detector_config_json(a.det);
  m.config()["recovery"] = recovery_config_json(a.rec);
  if (a.model.empty()) m.config()["train"] = train_config_json(a.train);
  m.config()["out"] = a.out;
  m.write(fs::path(a.out) / "run_manifest.json");
  emit(counts_summary(s.report).dump(), "");
}

struct GuardArgs {
  std::string in, model, out;
  DetectorOptions det;
  RecoveryOptions rec;
};

void cmd_guard(const GuardArgs& a, const Globals& g) {
  Manifest m("guard", g);
  m.input("in", a.in);
  m.input("model", a.model);
  if (a.rec.budget_path.empty()) throw ValidationError("guard needs --budget from a training-time run");
  const Model model = Model::load(a.model);
  std::vector<LabeledSample> queries;
  bool has_truth = false;
  std::optional<Dataset> data;
  if (fs::is_directory(a.in)) {
    data = read_dataset(a.in);
    queries = data->samples();
    has_truth = true;
  } else {
    queries.push_back({read_image(a.in), 0, Provenance::clean});
  }
  const std::uint64_t detect_seed = stage_seed(g.seed, "detect");
  PipelineConfig pc = pipeline_config(a.rec, g, m);
  pc.mode = PipelineMode::inference_time;
  pc.ensemble = build_ensemble(a.det, detect_seed, data ? &*data : nullptr);

  Json out = Json::array();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto truth = has_truth ? std::optional<Provenance>(queries[i].provenance) : std::nullopt;
    const GuardResult r = guard_inference(queries[i].image, model, pc, truth);
    Json e{{"index", i},
           {"verdict", std::string(to_string(r.detection.aggregate.value))},
           {"raw_prediction", r.raw_prediction},
           {"prediction", r.prediction}};
    if (r.recovery) e["rho_inf"] = r.recovery->rho_inf;
    out.push_back(std::move(e));
  }
  m.config() = detector_config_json(a.det);
  m.config()["recovery"] = recovery_config_json(a.rec);
  if (!a.out.empty()) m.write(sidecar_manifest(a.out));
  emit(out.dump(2), a.out);
}

struct EvaluateArgs {
  std::string fixtures, detections, model, in, plan, report, out, name = "synthetic";
  std::string format = "table";
};

std::vector<EvaluationRow> fixture_rows(bool majority_only) {
  std::vector<EvaluationRow> rows;
  for (const auto& t : reference_count_tables()) {
    for (const auto& r : t.rows) {
      if (majority_only && r.detector != "Majority") continue;
      rows.push_back({std::string(t.dataset), std::string(r.detector), r.counts});
    }
  }
  return rows;
}

std::string breakdown_table(std::span<const EvaluationRow> rows) {
  std::string out = fmt::format("{:<10} {:<14} {:>8} {:>8} {:>8} {:>8}   (row %, clean = positive)\n", "dataset",
                                "detector", "TP", "TN", "FP", "FN");
  for (const auto& r : rows) {
    const auto b = outcome_breakdown(r.counts);
    out += fmt::format("{:<10} {:<14} {:>8} {:>8} {:>8} {:>8}\n", r.dataset, r.detector, format_percent(b.tp.value),
                       format_percent(b.tn.value), format_percent(b.fp.value), format_percent(b.fn.value));
  }
  return out;
}

std::string render_rows(std::span<const EvaluationRow> rows, const std::string& format, bool breakdown) {
  if (format == "json") return evaluation_json(rows).dump(2);
  if (format == "csv") return evaluation_csv(rows);
  return breakdown ? breakdown_table(rows) : evaluation_table(rows);
}

void cmd_evaluate(const EvaluateArgs& a, const Globals& g) {
  Manifest m("evaluate", g);
  m.config() = {{"fixtures", a.fixtures}, {"format", a.format}};
  std::string text;
  if (!a.fixtures.empty()) {
    if (a.fixtures == "table357") {
      text = render_rows(fixture_rows(true), a.format, false);
    } else if (a.fixtures == "table246") {
      text = render_rows(fixture_rows(false), a.format, true);
    } else if (a.fixtures == "counts") {
      text = render_rows(fixture_rows(false), a.format, false);
    } else {
      throw ValidationError(fmt::format("unknown fixture set '{}'", a.fixtures));
    }
  } else if (!a.detections.empty()) {
    m.input("detections", a.detections);
    const auto records = read_detections(a.detections);
    const std::vector<EvaluationRow> rows{{a.name, "ensemble", confusion(records)}};
    text = render_rows(rows, a.format, false);
  } else if (!a.report.empty()) {
    m.input("report", a.report);
    const Json j = read_json(a.report);
    if (!j.contains("per_image") || j["budget"].is_null()) throw ValidationError("report has no recovered images");
    std::vector<RecoveryResult> results;
    for (const auto& e : j["per_image"]) {
      RecoveryResult r;
      r.rho_inf = e.at("rho_inf").get<double>();
      r.rho_2 = e.at("rho_2").get<double>();
      results.push_back(std::move(r));
    }
    const double eps = j["budget"].at("epsilon").get<double>();
    const NoiseStats s = noise_stats(results, eps);
    if (a.format == "json") {
      text = noise_stats_json(s).dump(2);
    } else {
      const NoiseRow row = format_noise_row(a.name, s.mean_rho_inf, s.mean_rho_2);
      text = a.format == "csv" ? fmt::format("dataset,rho_inf,rho_2\n{},{},{}\n", row.dataset, row.rho_inf, row.rho_2)
                               : render_noise_row(row);
    }
  } else if (!a.model.empty() && !a.in.empty()) {
    m.input("model", a.model);
    m.input("in", a.in);
    const Model model = Model::load(a.model);
    const Dataset data = read_dataset(a.in);
    Json j{{"accuracy", accuracy(model, data)}, {"samples", data.size()}};
    if (!a.plan.empty()) {
      m.input("plan", a.plan);
      const PoisonPlan plan = load_poison_plan(a.plan);
      const auto probes = make_triggered_probes(data, plan.source_class, trigger_from_plan(plan));
      j["attack_success_rate"] = attack_success_rate(model, probes, plan.target_class);
      j["target_class"] = plan.target_class;
    }
    text = a.format == "csv" ? fmt::format("accuracy,attack_success_rate\n{},{}\n", j["accuracy"].get<double>(),
                                           j.contains("attack_success_rate") ? j["attack_success_rate"].dump() : "")
                             : j.dump(2);
  } else {
    throw ValidationError("evaluate needs --fixtures, --detections, --report, or --model with --in");
  }
  if (!a.out.empty()) m.write(sidecar_manifest(a.out));
  emit(text, a.out);
}

} // namespace

int run(int argc, char** argv) {
  CLI::App app{"Backdoor sanitization toolkit: poison, detect, recover, evaluate", "bf"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML config file; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
  app.add_option("--seed", g.seed, "root seed, split per stage");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "generate the synthetic identity benchmark");
  c_gen->add_option("--out", gen.out, "output dataset directory")->required();
  c_gen->add_option("--classes", gen.classes)->check(CLI::PositiveNumber);
  c_gen->add_option("--per-class", gen.per_class)->check(CLI::PositiveNumber);
  c_gen->add_option("--height", gen.height)->check(CLI::PositiveNumber);
  c_gen->add_option("--width", gen.width)->check(CLI::PositiveNumber);
  c_gen->add_option("--channels", gen.channels)->check(CLI::IsMember({1, 3}));
  c_gen->add_option("--sigma", gen.sigma, "per-pixel noise std")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--split", gen.split, "train, or any other name for a held-out noise draw");

  PoisonArgs poison;
  auto* c_poison = app.add_subcommand("poison", "inject a backdoor into a dataset");
  c_poison->add_option("--in", poison.in)->required()->check(CLI::ExistingDirectory);
  c_poison->add_option("--out", poison.out)->required();
  c_poison->add_option("--method", poison.method, "patch | makeup | hidden")
      ->check(CLI::IsMember({"patch", "makeup", "hidden"}));
  c_poison->add_option("--source", poison.source);
  c_poison->add_option("--target", poison.target);
  c_poison->add_option("--rate", poison.rate, "fraction of the source (or target) class poisoned");
  c_poison->add_option("--patch-size", poison.patch_size);
  c_poison->add_option("--amplitude", poison.amplitude, "checkerboard swing around 0.5");
  c_poison->add_option("--opacity", poison.opacity);
  c_poison->add_option("--row", poison.row, "patch row (default: bottom edge)");
  c_poison->add_option("--col", poison.col, "patch column (default: right edge)");
  c_poison->add_option("--relabel", poison.relabel, "auto | true | false")
      ->check(CLI::IsMember({"auto", "true", "false"}));
  c_poison->add_option("--model", poison.model, "feature extractor for --method hidden")->check(CLI::ExistingFile);
  c_poison->add_option("--pixel-budget", poison.pixel_budget);
  c_poison->add_option("--hidden-steps", poison.hidden_steps);
  c_poison->add_option("--hidden-step-size", poison.hidden_step_size);

  TrainArgs trn;
  auto* c_train = app.add_subcommand("train", "train a classifier");
  c_train->add_option("--in", trn.in)->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--out", trn.out, "model checkpoint path")->required();
  c_train->add_option("--detections", trn.detections, "train only on samples voted clean")->check(CLI::ExistingFile);
  add_train_options(c_train, trn.opt);

  DetectArgs det;
  auto* c_detect = app.add_subcommand("detect", "vote on every sample");
  c_detect->add_option("--in", det.in)->required()->check(CLI::ExistingDirectory);
  c_detect->add_option("--out", det.out, "detections JSONL path")->required();
  add_detector_options(c_detect, det.det, true);

  RecoverArgs rec;
  auto* c_recover = app.add_subcommand("recover", "probe, budget and correct flagged samples");
  c_recover->add_option("--in", rec.in)->required()->check(CLI::ExistingDirectory);
  c_recover->add_option("--model", rec.model)->required()->check(CLI::ExistingFile);
  c_recover->add_option("--detections", rec.detections, "votes from detect (default: correct all)")
      ->check(CLI::ExistingFile);
  c_recover->add_option("--out", rec.out)->required();
  add_recovery_options(c_recover, rec.rec);

  SanitizeArgs san;
  auto* c_sanitize = app.add_subcommand("sanitize", "detect and recover in one pass");
  c_sanitize->add_option("--in", san.in)->required()->check(CLI::ExistingDirectory);
  c_sanitize->add_option("--model", san.model, "trusted model (default: train on the voted-clean subset)")
      ->check(CLI::ExistingFile);
  c_sanitize->add_option("--out", san.out)->required();
  add_detector_options(c_sanitize, san.det, true);
  add_recovery_options(c_sanitize, san.rec);
  add_train_options(c_sanitize, san.train);

  GuardArgs grd;
  auto* c_guard = app.add_subcommand("guard", "inference-time detection and correction");
  c_guard->add_option("--in", grd.in, "query tensor file or dataset directory")->required()->check(CLI::ExistingPath);
  c_guard->add_option("--model", grd.model)->required()->check(CLI::ExistingFile);
  c_guard->add_option("--out", grd.out, "also write results here");
  add_detector_options(c_guard, grd.det, true);
  add_recovery_options(c_guard, grd.rec);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "metrics, attack success and noise statistics");
  c_eval->add_option("--fixtures", ev.fixtures, "table357 | table246 | counts");
  c_eval->add_option("--detections", ev.detections)->check(CLI::ExistingFile);
  c_eval->add_option("--report", ev.report, "recovery_report.json")->check(CLI::ExistingFile);
  c_eval->add_option("--model", ev.model)->check(CLI::ExistingFile);
  c_eval->add_option("--in", ev.in)->check(CLI::ExistingDirectory);
  c_eval->add_option("--plan", ev.plan, "poison plan directory for attack success")->check(CLI::ExistingDirectory);
  c_eval->add_option("--name", ev.name, "dataset name in rendered rows");
  c_eval->add_option("--out", ev.out, "also write the output here");
  c_eval->add_option("--format", ev.format, "table | json | csv")->check(CLI::IsMember({"table", "json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_gen->parsed()) cmd_gen(gen, g);
    else if (c_poison->parsed()) cmd_poison(poison, g);
    else if (c_train->parsed()) cmd_train(trn, g);
    else if (c_detect->parsed()) cmd_detect(det, g);
    else if (c_recover->parsed()) cmd_recover(rec, g);
    else if (c_sanitize->parsed()) cmd_sanitize(san, g);
    else if (c_guard->parsed()) cmd_guard(grd, g);
    else if (c_eval->parsed()) cmd_evaluate(ev, g);
    return 0;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "runtime error: {}\n", e.what());
    return 2;
  }
}

} // namespace bf::cli
