#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "palmscan/io.hpp"

namespace palmscan {

enum class CrownLabel { healthy = 0, infested = 1, unknown = 2 };

std::string_view to_string(CrownLabel label) noexcept;
std::optional<CrownLabel> crown_label_from_string(std::string_view s) noexcept;

struct ClassificationResult {
  std::array<double, 3> probs{1.0, 0.0, 0.0};  // indexed by CrownLabel

  double prob(CrownLabel l) const noexcept { return probs[static_cast<int>(l)]; }
  // Highest probability wins; ties go to the lower enum value.
  CrownLabel label() const noexcept;
  bool normalized(double tol = 1e-6) const noexcept;

  static ClassificationResult one_hot(CrownLabel l) noexcept;
};

Json to_json(const ClassificationResult& c);
// Throws DomainError unless the three probabilities are in [0,1] and sum to 1.
ClassificationResult classification_from_json(const Json& probs);

}  // namespace palmscan
