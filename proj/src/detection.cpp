#include "bf/detection.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "bf/error.hpp"
#include "bf/parallel.hpp"
#include "bf/rng.hpp"

namespace bf {

using json = nlohmann::json;

std::string_view to_string(VerdictValue v) {
  return v == VerdictValue::poisoned ? "poisoned" : "clean";
}

VerdictValue verdict_from_string(std::string_view s) {
  if (s == "clean") return VerdictValue::clean;
  if (s == "poisoned") return VerdictValue::poisoned;
  throw ValidationError(fmt::format("unknown verdict '{}'", s));
}

Verdict simulated_detector(const DetectorInput& input, const DetectorProfile& profile) {
  if (!input.truth) throw ValidationError("simulated detector needs ground-truth provenance");
  const double u = counter_uniform(profile.seed, input.index);
  if (*input.truth == Provenance::poisoned) {
    return u < profile.false_negative_rate ? Verdict::clean("simulated miss") : Verdict::poison("simulated hit");
  }
  return u < profile.false_positive_rate ? Verdict::poison("simulated false alarm") : Verdict::clean();
}

Verdict residual_detector(const Image& x, std::span<const Image> prototypes, double threshold) {
  if (prototypes.empty()) throw ValidationError("residual detector needs at least one prototype");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : prototypes) best = std::min(best, linf_distance(x, p));
  auto why = fmt::format("min residual {:.4f} vs threshold {:.4f}", best, threshold);
  return best > threshold ? Verdict::poison(std::move(why)) : Verdict::clean(std::move(why));
}

SimulatedDetector::SimulatedDetector(DetectorProfile profile, std::string label)
    : profile_(profile), label_(std::move(label)) {
  for (double r : {profile.false_positive_rate, profile.false_negative_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError(fmt::format("detector error rate {} outside [0,1]", r));
  }
}

std::string SimulatedDetector::name() const {
  if (!label_.empty()) return label_;
  return fmt::format("simulated:{},{}", profile_.false_positive_rate, profile_.false_negative_rate);
}

Verdict SimulatedDetector::evaluate(const DetectorInput& input) const {
  return simulated_detector(input, profile_);
}

ResidualDetector::ResidualDetector(std::vector<Image> prototypes, double threshold)
    : prototypes_(std::move(prototypes)), threshold_(threshold) {
  if (prototypes_.empty()) throw ValidationError("residual detector needs at least one prototype");
}

std::string ResidualDetector::name() const {
  return "residual";
}

Verdict ResidualDetector::evaluate(const DetectorInput& input) const {
  return residual_detector(input.image, prototypes_, threshold_);
}

std::shared_ptr<const Detector> make_oracle_detector() {
  return std::make_shared<SimulatedDetector>(DetectorProfile{0.0, 0.0, 0}, "oracle");
}

std::vector<Image> class_medians(const Dataset& data) {
  std::vector<Image> out;
  const Shape shape = data.shape();
  for (std::uint32_t k = 0; k < data.num_classes(); ++k) {
    const auto idx = data.indices_of_class(k);
    if (idx.empty()) continue;
    std::vector<float> med(shape.size());
    std::vector<float> column(idx.size());
    for (std::size_t e = 0; e < shape.size(); ++e) {
      for (std::size_t i = 0; i < idx.size(); ++i) column[i] = data[idx[i]].image[e];
      auto mid = column.begin() + static_cast<std::ptrdiff_t>(column.size() / 2);
      std::nth_element(column.begin(), mid, column.end());
      med[e] = *mid;
    }
    out.emplace_back(shape, std::move(med));
  }
  return out;
}

std::uint32_t default_threshold(std::size_t num_detectors) {
  return static_cast<std::uint32_t>((num_detectors + 1) / 2);
}

Verdict majority_vote(std::span<const Verdict> verdicts, std::uint32_t threshold) {
  if (verdicts.empty()) throw ValidationError("majority vote over an empty verdict list");
  if (threshold < 1 || threshold > verdicts.size()) {
    throw ValidationError(fmt::format("vote threshold {} outside [1, {}]", threshold, verdicts.size()));
  }
  const auto flags = static_cast<std::size_t>(
      std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.poisoned(); }));
  auto why = fmt::format("{} of {} flagged (threshold {})", flags, verdicts.size(), threshold);
  return flags >= threshold ? Verdict::poison(std::move(why)) : Verdict::clean(std::move(why));
}

std::uint32_t EnsembleConfig::effective_threshold() const {
  return threshold == 0 ? default_threshold(detectors.size()) : threshold;
}

void EnsembleConfig::validate() const {
  if (detectors.empty()) throw ValidationError("ensemble needs at least one detector");
  for (const auto& d : detectors) {
    if (!d) throw ValidationError("ensemble contains a null detector");
  }
  const auto t = effective_threshold();
  if (t < 1 || t > detectors.size()) {
    throw ValidationError(fmt::format("vote threshold {} outside [1, {}]", t, detectors.size()));
  }
}

DetectionRecord detect_one(const Image& x, std::optional<Provenance> truth, std::size_t index,
                           const EnsembleConfig& cfg) {
  DetectionRecord rec;
  rec.index = index;
  rec.truth = truth;
  rec.votes.reserve(cfg.detectors.size());
  const DetectorInput input{x, truth, index};
  for (const auto& det : cfg.detectors) {
    try {
      rec.votes.push_back(det->evaluate(input));
    } catch (const std::exception& e) {
      rec.votes.push_back(Verdict::abstain(fmt::format("{} failed: {}", det->name(), e.what())));
    }
  }
  rec.aggregate = majority_vote(rec.votes, cfg.effective_threshold());
  return rec;
}

std::vector<DetectionRecord> detect_all(const Dataset& data, const EnsembleConfig& cfg, std::size_t threads) {
  cfg.validate();
  std::vector<DetectionRecord> records(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    records[i] = detect_one(data[i].image, data[i].provenance, i, cfg);
  });
  return records;
}

std::string detection_record_json(const DetectionRecord& r) {
  json j;
  j["index"] = r.index;
  j["truth"] = r.truth ? json(std::string(to_string(*r.truth))) : json(nullptr);
  json votes = json::array(), rationales = json::array(), abstained = json::array();
  for (const auto& v : r.votes) {
    votes.push_back(std::string(to_string(v.value)));
    rationales.push_back(v.rationale);
    abstained.push_back(v.abstained);
  }
  j["votes"] = std::move(votes);
  j["aggregate"] = std::string(to_string(r.aggregate.value));
  j["rationales"] = std::move(rationales);
  j["abstained"] = std::move(abstained);
  return j.dump();
}

void write_detections(const std::filesystem::path& path, std::span<const DetectionRecord> records) {
  std::ofstream out(path);
  if (!out) throw RuntimeError(fmt::format("cannot write '{}'", path.string()));
  for (const auto& r : records) out << detection_record_json(r) << '\n';
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  std::vector<DetectionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      DetectionRecord r;
      r.index = j.at("index").get<std::size_t>();
      if (!j.at("truth").is_null()) r.truth = provenance_from_string(j["truth"].get<std::string>());
      const auto& votes = j.at("votes");
      const auto rationales = j.value("rationales", json::array());
      const auto abstained = j.value("abstained", json::array());
      for (std::size_t v = 0; v < votes.size(); ++v) {
        Verdict verdict{verdict_from_string(votes[v].get<std::string>()), {}, false};
        if (v < rationales.size()) verdict.rationale = rationales[v].get<std::string>();
        if (v < abstained.size()) verdict.abstained = abstained[v].get<bool>();
        r.votes.push_back(std::move(verdict));
      }
      r.aggregate.value = verdict_from_string(j.at("aggregate").get<std::string>());
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

} // namespace bf
