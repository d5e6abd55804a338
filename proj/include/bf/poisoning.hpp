#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "bf/classifier.hpp"
#include "bf/dataset.hpp"
#include "bf/image.hpp"

namespace bf {

struct PatchTrigger {
  Image pattern;
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  float opacity = 1.0f;
};

struct MakeupSpec {
  Image mask;    // values in {0,1}
  Image pattern; // same shape as the target image
};

struct HiddenTriggerConfig {
  double pixel_budget = 16.0 / 255.0;
  std::uint32_t steps = 100;
  double step_size = 0.01;
};

// Inside the patch footprint out = (1-opacity)*x + opacity*pattern; the rest
// of x is copied bit-for-bit. Throws ValidationError if the patch does not
// fit, channel counts differ, or opacity is outside (0,1].
Image apply_patch(const Image& x, const PatchTrigger& trig);

// out = x_s where mask is 0 and pattern where mask is 1.
Image blend_makeup(const Image& x_s, const MakeupSpec& spec);

struct HiddenTriggerResult {
  Image poisoned;
  double initial_distance = 0.0;
  double final_distance = 0.0;
  // Squared feature distance after each accepted step (first entry = start).
  std::vector<double> distance_trace;
};

// Feature-collision poison: starting from the target image t, descend
// ||features(z) - features(apply_patch(s, trig))||^2 with plain projected
// gradient steps, keeping z inside the l-inf ball of radius pixel_budget
// around t and inside [0,1]. A step that would increase the distance is
// retried at half the step size (up to 30 halvings) and the run stops when
// no decrease is found, so the distance never increases.
HiddenTriggerResult hidden_trigger_poison(const Model& model, const Image& target, const Image& source,
                                          const PatchTrigger& trig, const HiddenTriggerConfig& cfg);

// Square patch of side `size` whose pixels alternate 0.5+amplitude and
// 0.5-amplitude in a checkerboard, clipped to [0,1].
Image make_checkerboard_pattern(std::uint32_t size, std::uint32_t channels, double amplitude);
// Binary mask that is 1 inside the rectangle and 0 elsewhere.
Image make_rect_mask(Shape shape, std::uint32_t row, std::uint32_t col, std::uint32_t height,
                     std::uint32_t width);

enum class PoisonMethod { patch, makeup, hidden_trigger };
std::string_view to_string(PoisonMethod m);
PoisonMethod poison_method_from_string(std::string_view s);

// First ceil(rate * n) samples (by dataset order) of class `cls`.
std::vector<std::size_t> select_poison_indices(const Dataset& data, std::uint32_t cls, double rate);

struct PoisonEntry {
  std::size_t index = 0;                   // dataset slot that receives the poison
  std::optional<std::size_t> source_index; // hidden trigger: the source image used
  std::uint32_t label = 0;                 // label stored with the poisoned sample
};

// Everything needed to replay a poisoning run exactly.
struct PoisonPlan {
  PoisonMethod method = PoisonMethod::patch;
  std::uint32_t source_class = 0;
  std::uint32_t target_class = 0;
  double rate = 0.1;
  // Patch and makeup attacks store the attacker's label (the target class)
  // with the triggered source image. Hidden-trigger poisons keep the target
  // image's own class.
  bool relabel_to_target = true;
  std::optional<PatchTrigger> patch;
  std::optional<MakeupSpec> makeup;
  HiddenTriggerConfig hidden;
  std::vector<PoisonEntry> entries;
};

struct PoisonRequest {
  PoisonMethod method = PoisonMethod::patch;
  std::uint32_t source_class = 0;
  std::uint32_t target_class = 1;
  double rate = 0.1;
  std::optional<bool> relabel_to_target; // default depends on method
  std::optional<PatchTrigger> patch;
  std::optional<MakeupSpec> makeup;
  HiddenTriggerConfig hidden;
};

PoisonPlan make_poison_plan(const Dataset& data, const PoisonRequest& req);

// Applies the plan; `model` is required for hidden-trigger plans.
Dataset apply_poison_plan(const Dataset& data, const PoisonPlan& plan, const Model* model = nullptr);

// plan.json plus trigger assets as raw tensor files in `dir`.
void save_poison_plan(const std::filesystem::path& dir, const PoisonPlan& plan);
PoisonPlan load_poison_plan(const std::filesystem::path& dir);

// Every sample of `source_class` with the trigger applied; labels stay the
// true source class, provenance is poisoned.
std::vector<LabeledSample> make_triggered_probes(const Dataset& data, std::uint32_t source_class,
                                                 const PatchTrigger& trig);

} // namespace bf
