#include "tempdens/gate.hpp"

#include <cmath>

#include "tempdens/error.hpp"

namespace tempdens {

double task_probability_from_logits(const Vector& logits) {
  require(logits.size() == 2, ErrorCode::kShape, "gate model must produce exactly two logits");
  require(logits.allFinite(), ErrorCode::kNonFinite, "non-finite gate logits");
  // softmax over two classes is the logistic of the logit difference
  return 1.0 / (1.0 + std::exp(logits(0) - logits(1)));
}

double gate_probability(const WindowFrame& window, const CspLinearModel& gate_model) {
  require(gate_model.trained, ErrorCode::kUntrained, "gate model is not trained");
  return task_probability_from_logits(infer(window, gate_model).logits);
}

}  // namespace tempdens
