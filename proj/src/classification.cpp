#include "palmscan/classification.hpp"

#include <cmath>

#include "palmscan/errors.hpp"

namespace palmscan {

std::string_view to_string(CrownLabel label) noexcept {
  switch (label) {
    case CrownLabel::healthy:
      return "healthy";
    case CrownLabel::infested:
      return "infested";
    case CrownLabel::unknown:
      return "unknown";
  }
  return "unknown";
}

std::optional<CrownLabel> crown_label_from_string(std::string_view s) noexcept {
  if (s == "healthy") return CrownLabel::healthy;
  if (s == "infested") return CrownLabel::infested;
  if (s == "unknown") return CrownLabel::unknown;
  return std::nullopt;
}

CrownLabel ClassificationResult::label() const noexcept {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<CrownLabel>(best);
}

bool ClassificationResult::normalized(double tol) const noexcept {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

ClassificationResult ClassificationResult::one_hot(CrownLabel l) noexcept {
  ClassificationResult r;
  r.probs = {0.0, 0.0, 0.0};
  r.probs[static_cast<int>(l)] = 1.0;
  return r;
}

Json to_json(const ClassificationResult& c) {
  Json j;
  j["healthy"] = c.probs[0];
  j["infested"] = c.probs[1];
  j["unknown"] = c.probs[2];
  return j;
}

ClassificationResult classification_from_json(const Json& probs) {
  if (!probs.is_object()) throw DomainError("probs must be an object");
  ClassificationResult r;
  r.probs = {0.0, 0.0, 0.0};
  for (const auto& [key, value] : probs.items()) {
    auto label = crown_label_from_string(key);
    if (!label) throw DomainError("unexpected class '" + key + "'");
    if (!value.is_number()) throw DomainError("probability for '" + key + "' is not a number");
    r.probs[static_cast<int>(*label)] = value.get<double>();
  }
  if (!r.normalized()) throw DomainError("class probabilities must lie in [0,1] and sum to 1");
  return r;
}

}  // namespace palmscan
