#pragma once

#include "tempdens/backbone.hpp"

namespace tempdens {

enum class GateDecision { kRest, kTask };

struct GateConfig {
  double lambda = 0.5;
};

/// Task-class softmax probability of two gate logits (index 1 = task).
double task_probability_from_logits(const Vector& logits);

double gate_probability(const WindowFrame& window, const CspLinearModel& gate_model);

/// Task iff p_task >= lambda.
inline GateDecision gate_decide(double p_task, double lambda) {
  return p_task >= lambda ? GateDecision::kTask : GateDecision::kRest;
}

}  // namespace tempdens
