#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempdens/backbone.hpp"
#include "tempdens/calibration.hpp"
#include "tempdens/gate.hpp"

namespace tempdens {

enum class Decision { kNoAction, kClass, kReject };

std::string_view decision_name(Decision decision);

struct DecisionRecord {
  double start_s = 0.0;
  std::size_t index = 0;
  Decision decision = Decision::kNoAction;
  int class_index = -1;
  double p_task = 0.0;
  bool scored = false;  // false on NoAction and on faults before scoring
  RawComponents raw;
  StandardizedComponents standardized;
  double fused = 0.0;
  bool history_mature = false;
  std::optional<std::string> fault;  // faults always carry decision = Reject
};

nlohmann::json record_to_json(const DecisionRecord& record);
std::string records_to_jsonl(const std::vector<DecisionRecord>& records);

/// Online hierarchical decision loop over one stream. Holds the temporal
/// history and the online-aggregation buffer; the calibration pack is shared.
class Engine {
 public:
  Engine(const CalibrationPack& pack, GateConfig gate);

  /// One update: gate, early exit on rest, otherwise score and threshold.
  /// `infer` is only invoked when the gate passes the window.
  DecisionRecord step(double start_s, std::size_t index, double p_task, const std::function<FeatureFrame()>& infer);

  DecisionRecord step(const WindowFrame& window, const Backbone& backbone);

  void reset();

  const FeatureHistory& history() const { return history_; }
  /// Last W task-gated frames (W = aggregation_window), oldest first.
  const std::deque<FeatureFrame>& recent_frames() const { return recent_; }
  /// Frame accepted by the last scored step, if any.
  const std::optional<FeatureFrame>& last_frame() const { return last_frame_; }

 private:
  const CalibrationPack* pack_;
  GateConfig gate_;
  FeatureHistory history_;
  std::deque<FeatureFrame> recent_;
  std::optional<double> last_task_s_;
  std::optional<double> last_step_s_;
  std::optional<FeatureFrame> last_frame_;
};

/// Runs the engine over time-ordered windows; throws on out-of-order input.
std::vector<DecisionRecord> run_stream(const std::vector<WindowFrame>& frames, const Backbone& backbone,
                                       const CalibrationPack& pack, GateConfig gate);

}  // namespace tempdens
