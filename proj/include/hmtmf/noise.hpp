#pragma once

#include "hmtmf/types.hpp"

#include <optional>

namespace hmtmf {

/// Diagonal of the intrinsic noise matrix of one task; entry i is the
/// intrinsic variance at x_i divided by its replicate count.
struct NoiseMatrix {
  Vector diag;

  Index size() const { return diag.size(); }
};

enum class NoisePolicy { sample_variance_only, declared_variance_fallback };

/// Unbiased sample variance; empty when fewer than two replicates.
std::optional<double> sample_variance(std::span<const double> replicates);

NoiseMatrix build_noise_matrix(const TaskDataset& task, const FidelityTable& fidelities, NoisePolicy policy);

/// Raises every entry to at least `floor`.
NoiseMatrix floor_noise(NoiseMatrix noise, double floor);

}  // namespace hmtmf
