#include "tempdens/engine.hpp"

#include <cmath>

#include "tempdens/error.hpp"

namespace tempdens {

std::string_view decision_name(Decision decision) {
  switch (decision) {
    case Decision::kNoAction: return "no_action";
    case Decision::kClass: return "class";
    case Decision::kReject: return "reject";
  }
  return "no_action";
}

nlohmann::json record_to_json(const DecisionRecord& r) {
  nlohmann::json j;
  j["start_s"] = r.start_s;
  j["index"] = r.index;
  j["decision"] = decision_name(r.decision);
  j["class"] = r.decision == Decision::kClass ? nlohmann::json(r.class_index) : nlohmann::json(nullptr);
  j["p_task"] = r.p_task;
  if (r.scored) {
    j["scores"] = {{"ebo", r.raw.ebo},
                   {"mahalanobis", r.raw.density.mahalanobis},
                   {"knn", r.raw.density.knn},
                   {"dens", r.raw.density.density},
                   {"temp", r.raw.temporal.value}};
    j["standardized"] = {{"ebo", r.standardized.ebo}, {"dens", r.standardized.dens}, {"temp", r.standardized.temp}};
    j["s_ood"] = r.fused;
  } else {
    j["scores"] = nullptr;
    j["standardized"] = nullptr;
    j["s_ood"] = nullptr;
  }
  j["history_mature"] = r.history_mature;
  j["fault"] = r.fault ? nlohmann::json(*r.fault) : nlohmann::json(nullptr);
  return j;
}

std::string records_to_jsonl(const std::vector<DecisionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

Engine::Engine(const CalibrationPack& pack, GateConfig gate) : pack_(&pack), gate_(gate) {
  pack.scoring.validate();
  require(gate.lambda >= 0.0, ErrorCode::kInvalidArgument, "gate threshold must be non-negative");
}

void Engine::reset() {
  history_.clear();
  recent_.clear();
  last_task_s_.reset();
  last_step_s_.reset();
  last_frame_.reset();
}

DecisionRecord Engine::step(double start_s, std::size_t index, double p_task,
                            const std::function<FeatureFrame()>& infer) {
  require(!last_step_s_ || start_s > *last_step_s_, ErrorCode::kOrder,
          "frame at " + std::to_string(start_s) + " s is not after the previous frame");
  last_step_s_ = start_s;

  DecisionRecord rec;
  rec.start_s = start_s;
  rec.index = index;
  rec.p_task = p_task;
  last_frame_.reset();

  if (!std::isfinite(p_task)) {
    rec.decision = Decision::kReject;
    rec.fault = "non-finite task probability";
    return rec;
  }
  if (gate_decide(p_task, gate_.lambda) == GateDecision::kRest) {
    rec.decision = Decision::kNoAction;
    return rec;
  }

  try {
    if (last_task_s_ && history_gap_exceeded(*last_task_s_, start_s, pack_->scoring)) {
      history_.clear();
      recent_.clear();
    }
    last_task_s_ = start_s;

    FeatureFrame frame = infer();
    require(frame.logits.size() == pack_->num_classes(), ErrorCode::kShape,
            "frame has " + std::to_string(frame.logits.size()) + " logits, calibration expects " +
                std::to_string(pack_->num_classes()));
    rec.raw = compute_components(frame, history_, *pack_);
    rec.history_mature = rec.raw.temporal.mature;
    rec.standardized = standardize(rec.raw, *pack_);
    rec.fused = fuse(rec.standardized, pack_->scoring.weights);
    require(std::isfinite(rec.fused), ErrorCode::kNonFinite, "non-finite fused score");
    rec.scored = true;

    history_.push(start_s, frame.features);
    recent_.push_back(frame);
    while (recent_.size() > static_cast<std::size_t>(pack_->scoring.aggregation_window)) recent_.pop_front();

    if (rec.fused > pack_->tau) {
      rec.decision = Decision::kReject;
    } else {
      rec.decision = Decision::kClass;
      Index best = 0;
      for (Index c = 1; c < frame.logits.size(); ++c)
        if (frame.logits(c) > frame.logits(best)) best = c;
      rec.class_index = static_cast<int>(best);
    }
    last_frame_ = std::move(frame);
  } catch (const std::exception& e) {
    rec.decision = Decision::kReject;
    rec.scored = false;
    rec.class_index = -1;
    rec.fault = e.what();
  }
  return rec;
}

DecisionRecord Engine::step(const WindowFrame& window, const Backbone& backbone) {
  double p_task = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::string> gate_fault;
  try {
    p_task = backbone.task_probability(window);
  } catch (const std::exception& e) {
    gate_fault = e.what();
  }
  auto rec = step(window.start_s, window.index, p_task, [&] { return backbone.features(window); });
  if (gate_fault) rec.fault = "gate: " + *gate_fault;
  return rec;
}

std::vector<DecisionRecord> run_stream(const std::vector<WindowFrame>& frames, const Backbone& backbone,
                                       const CalibrationPack& pack, GateConfig gate) {
  for (std::size_t i = 1; i < frames.size(); ++i)
    require(frames[i].start_s > frames[i - 1].start_s, ErrorCode::kOrder,
            "frames are not in time order at position " + std::to_string(i));
  Engine engine(pack, gate);
  std::vector<DecisionRecord> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(engine.step(f, backbone));
  return out;
}

}  // namespace tempdens
