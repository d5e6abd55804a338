#include "bf/poisoning.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "bf/error.hpp"
#include "bf/tensor_io.hpp"

namespace bf {

namespace fs = std::filesystem;
using json = nlohmann::json;

Image apply_patch(const Image& x, const PatchTrigger& trig) {
  const Shape& xs = x.shape();
  const Shape& ps = trig.pattern.shape();
  if (ps.channels != xs.channels) {
    throw ValidationError(fmt::format("patch has {} channels, image has {}", ps.channels, xs.channels));
  }
  if (std::size_t{trig.row} + ps.height > xs.height || std::size_t{trig.col} + ps.width > xs.width) {
    throw ValidationError(fmt::format("patch {} at ({},{}) does not fit image {}", ps.str(), trig.row,
                                      trig.col, xs.str()));
  }
  if (!(trig.opacity > 0.0f && trig.opacity <= 1.0f)) {
    throw ValidationError(fmt::format("patch opacity must be in (0,1], got {}", trig.opacity));
  }
  std::vector<float> out = x.to_vector();
  const double o = trig.opacity;
  for (std::uint32_t r = 0; r < ps.height; ++r) {
    for (std::uint32_t c = 0; c < ps.width; ++c) {
      for (std::uint32_t ch = 0; ch < ps.channels; ++ch) {
        const std::size_t i = xs.index(trig.row + r, trig.col + c, ch);
        const double v = (1.0 - o) * out[i] + o * trig.pattern.at(r, c, ch);
        out[i] = static_cast<float>(v);
      }
    }
  }
  return Image::clipped(xs, std::move(out));
}

Image blend_makeup(const Image& x_s, const MakeupSpec& spec) {
  require_same_shape(x_s.shape(), spec.mask.shape(), "blend_makeup mask");
  require_same_shape(x_s.shape(), spec.pattern.shape(), "blend_makeup pattern");
  std::vector<float> out = x_s.to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float m = spec.mask[i];
    if (m == 1.0f) {
      out[i] = spec.pattern[i];
    } else if (m != 0.0f) {
      throw ValidationError(fmt::format("makeup mask element {} = {} is not binary", i, m));
    }
  }
  return Image(x_s.shape(), std::move(out));
}

HiddenTriggerResult hidden_trigger_poison(const Model& model, const Image& target, const Image& source,
                                          const PatchTrigger& trig, const HiddenTriggerConfig& cfg) {
  require_same_shape(target.shape(), model.input_shape(), "hidden_trigger_poison target");
  require_same_shape(source.shape(), model.input_shape(), "hidden_trigger_poison source");
  if (!(cfg.pixel_budget >= 0.0 && cfg.pixel_budget <= 1.0)) {
    throw ValidationError(fmt::format("pixel budget must be in [0,1], got {}", cfg.pixel_budget));
  }
  if (!(cfg.step_size > 0.0)) throw ValidationError("hidden-trigger step size must be > 0");

  const Image patched = apply_patch(source, trig);
  const std::vector<double> goal = model.features(patched.data());
  const auto t = target.data();
  std::vector<float> z(t.begin(), t.end());
  std::vector<float> grad(z.size());
  std::vector<float> candidate(z.size());
  std::vector<float> scratch(z.size());

  double dist = model.feature_distance(z, goal, grad);
  HiddenTriggerResult result{target, dist, dist, {dist}};

  for (std::uint32_t step = 0; step < cfg.steps && cfg.pixel_budget > 0.0; ++step) {
    for (float g : grad) {
      if (!std::isfinite(g)) throw RuntimeError(fmt::format("non-finite feature gradient at step {}", step));
    }
    bool accepted = false;
    double eta = cfg.step_size;
    for (int halving = 0; halving <= 30 && !accepted; ++halving, eta *= 0.5) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        candidate[i] = static_cast<float>(z[i] - eta * grad[i]);
      }
      project_ball_and_range_inplace(candidate, t, cfg.pixel_budget);
      const double d = model.feature_distance(candidate, goal, scratch);
      if (d <= dist) {
        accepted = true;
        z.swap(candidate);
        grad.swap(scratch);
        dist = d;
        result.distance_trace.push_back(d);
      }
    }
    if (!accepted) break;
  }
  result.poisoned = Image(target.shape(), std::move(z));
  result.final_distance = dist;
  return result;
}

Image make_checkerboard_pattern(std::uint32_t size, std::uint32_t channels, double amplitude) {
  if (size == 0) throw ValidationError("checkerboard size must be positive");
  Shape s{size, size, channels};
  std::vector<float> data(s.size());
  for (std::uint32_t r = 0; r < size; ++r) {
    for (std::uint32_t c = 0; c < size; ++c) {
      const double v = ((r + c) % 2 == 0) ? 0.5 + amplitude : 0.5 - amplitude;
      for (std::uint32_t ch = 0; ch < channels; ++ch) data[s.index(r, c, ch)] = static_cast<float>(v);
    }
  }
  return Image::clipped(s, std::move(data));
}

Image make_rect_mask(Shape shape, std::uint32_t row, std::uint32_t col, std::uint32_t height,
                     std::uint32_t width) {
  if (std::size_t{row} + height > shape.height || std::size_t{col} + width > shape.width) {
    throw ValidationError("mask rectangle does not fit the image");
  }
  std::vector<float> data(shape.size(), 0.0f);
  for (std::uint32_t r = row; r < row + height; ++r) {
    for (std::uint32_t c = col; c < col + width; ++c) {
      for (std::uint32_t ch = 0; ch < shape.channels; ++ch) data[shape.index(r, c, ch)] = 1.0f;
    }
  }
  return Image(shape, std::move(data));
}

std::string_view to_string(PoisonMethod m) {
  switch (m) {
  case PoisonMethod::patch:
    return "patch";
  case PoisonMethod::makeup:
    return "makeup";
  case PoisonMethod::hidden_trigger:
    return "hidden";
  }
  return "patch";
}

PoisonMethod poison_method_from_string(std::string_view s) {
  if (s == "patch") return PoisonMethod::patch;
  if (s == "makeup") return PoisonMethod::makeup;
  if (s == "hidden" || s == "hidden_trigger") return PoisonMethod::hidden_trigger;
  throw ValidationError(fmt::format("unknown poisoning method '{}'", s));
}

std::vector<std::size_t> select_poison_indices(const Dataset& data, std::uint32_t cls, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError(fmt::format("poison rate must be in [0,1], got {}", rate));
  const auto members = data.indices_of_class(cls);
  // rate*n is rounded to 9 digits first so that e.g. 0.1*100 yields 10, not 11
  const double want = std::round(rate * static_cast<double>(members.size()) * 1e9) / 1e9;
  const auto count = static_cast<std::size_t>(std::ceil(want));
  return {members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(count, members.size()))};
}

PoisonPlan make_poison_plan(const Dataset& data, const PoisonRequest& req) {
  if (req.source_class >= data.num_classes() || req.target_class >= data.num_classes()) {
    throw ValidationError("source/target class out of range");
  }
  PoisonPlan plan;
  plan.method = req.method;
  plan.source_class = req.source_class;
  plan.target_class = req.target_class;
  plan.rate = req.rate;
  plan.relabel_to_target = req.relabel_to_target.value_or(req.method != PoisonMethod::hidden_trigger);
  plan.patch = req.patch;
  plan.makeup = req.makeup;
  plan.hidden = req.hidden;

  const auto sources = select_poison_indices(data, req.source_class, req.rate);
  switch (req.method) {
  case PoisonMethod::patch:
  case PoisonMethod::makeup:
    if (req.method == PoisonMethod::patch && !req.patch) throw ValidationError("patch plan needs a trigger");
    if (req.method == PoisonMethod::makeup && !req.makeup) throw ValidationError("makeup plan needs a mask and pattern");
    for (std::size_t idx : sources) {
      plan.entries.push_back({idx, std::nullopt, plan.relabel_to_target ? req.target_class : data[idx].label});
    }
    break;
  case PoisonMethod::hidden_trigger: {
    if (!req.patch) throw ValidationError("hidden-trigger plan needs a patch trigger");
    const auto targets = data.indices_of_class(req.target_class);
    if (targets.size() < sources.size()) {
      throw ValidationError("not enough target-class images to pair with the poisoned sources");
    }
    for (std::size_t i = 0; i < sources.size(); ++i) {
      plan.entries.push_back({targets[i], sources[i], req.target_class});
    }
    break;
  }
  }
  return plan;
}

Dataset apply_poison_plan(const Dataset& data, const PoisonPlan& plan, const Model* model) {
  std::vector<LabeledSample> samples = data.samples();
  for (const auto& e : plan.entries) {
    if (e.index >= samples.size()) throw ValidationError("poison plan index out of range");
    LabeledSample& slot = samples[e.index];
    switch (plan.method) {
    case PoisonMethod::patch:
      slot.image = apply_patch(data[e.index].image, *plan.patch);
      break;
    case PoisonMethod::makeup:
      slot.image = blend_makeup(data[e.index].image, *plan.makeup);
      break;
    case PoisonMethod::hidden_trigger:
      if (!model) throw ValidationError("hidden-trigger poisoning needs a model");
      if (!e.source_index || *e.source_index >= samples.size()) {
        throw ValidationError("hidden-trigger entry lacks a valid source index");
      }
      slot.image = hidden_trigger_poison(*model, data[e.index].image, data[*e.source_index].image,
                                         *plan.patch, plan.hidden)
                       .poisoned;
      break;
    }
    slot.label = e.label;
    slot.provenance = Provenance::poisoned;
  }
  return Dataset(data.name() + "-poisoned", data.num_classes(), std::move(samples));
}

void save_poison_plan(const fs::path& dir, const PoisonPlan& plan) {
  fs::create_directories(dir);
  json j;
  j["method"] = std::string(to_string(plan.method));
  j["source_class"] = plan.source_class;
  j["target_class"] = plan.target_class;
  j["rate"] = plan.rate;
  j["relabel_to_target"] = plan.relabel_to_target;
  if (plan.patch) {
    write_image(dir / "trigger_pattern.bft", plan.patch->pattern);
    j["patch"] = {{"pattern", "trigger_pattern.bft"},
                  {"row", plan.patch->row},
                  {"col", plan.patch->col},
                  {"opacity", plan.patch->opacity}};
  }
  if (plan.makeup) {
    write_image(dir / "makeup_mask.bft", plan.makeup->mask);
    write_image(dir / "makeup_pattern.bft", plan.makeup->pattern);
    j["makeup"] = {{"mask", "makeup_mask.bft"}, {"pattern", "makeup_pattern.bft"}};
  }
  j["hidden"] = {{"pixel_budget", plan.hidden.pixel_budget},
                 {"steps", plan.hidden.steps},
                 {"step_size", plan.hidden.step_size}};
  json entries = json::array();
  for (const auto& e : plan.entries) {
    json je = {{"index", e.index}, {"label", e.label}};
    if (e.source_index) je["source_index"] = *e.source_index;
    entries.push_back(std::move(je));
  }
  j["samples"] = std::move(entries);
  std::ofstream out(dir / "plan.json");
  out << j.dump(2) << '\n';
}

PoisonPlan load_poison_plan(const fs::path& dir) {
  std::ifstream in(dir / "plan.json");
  if (!in) throw ValidationError(fmt::format("missing '{}'", (dir / "plan.json").string()));
  try {
    const json j = json::parse(in);
    PoisonPlan plan;
    plan.method = poison_method_from_string(j.at("method").get<std::string>());
    plan.source_class = j.at("source_class").get<std::uint32_t>();
    plan.target_class = j.at("target_class").get<std::uint32_t>();
    plan.rate = j.at("rate").get<double>();
    plan.relabel_to_target = j.at("relabel_to_target").get<bool>();
    if (j.contains("patch")) {
      const auto& p = j["patch"];
      plan.patch = PatchTrigger{read_image(dir / p.at("pattern").get<std::string>()),
                                p.at("row").get<std::uint32_t>(), p.at("col").get<std::uint32_t>(),
                                p.at("opacity").get<float>()};
    }
    if (j.contains("makeup")) {
      const auto& m = j["makeup"];
      plan.makeup = MakeupSpec{read_image(dir / m.at("mask").get<std::string>()),
                               read_image(dir / m.at("pattern").get<std::string>())};
    }
    if (j.contains("hidden")) {
      const auto& h = j["hidden"];
      plan.hidden = {h.at("pixel_budget").get<double>(), h.at("steps").get<std::uint32_t>(),
                     h.at("step_size").get<double>()};
    }
    for (const auto& je : j.at("samples")) {
      PoisonEntry e;
      e.index = je.at("index").get<std::size_t>();
      e.label = je.at("label").get<std::uint32_t>();
      if (je.contains("source_index")) e.source_index = je["source_index"].get<std::size_t>();
      plan.entries.push_back(e);
    }
    return plan;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: schema violation: {}", (dir / "plan.json").string(), e.what()));
  }
}

std::vector<LabeledSample> make_triggered_probes(const Dataset& data, std::uint32_t source_class,
                                                 const PatchTrigger& trig) {
  std::vector<LabeledSample> probes;
  for (std::size_t idx : data.indices_of_class(source_class)) {
    probes.push_back({apply_patch(data[idx].image, trig), source_class, Provenance::poisoned});
  }
  return probes;
}

} // namespace bf
