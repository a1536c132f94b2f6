#include "hmtmf/noise.hpp"

#include <string>

namespace hmtmf {

std::optional<double> sample_variance(std::span<const double> replicates) {
  if (replicates.size() < 2) return std::nullopt;
  double mean = 0.0;
  for (double z : replicates) mean += z;
  mean /= static_cast<double>(replicates.size());
  double ss = 0.0;
  for (double z : replicates) ss += (z - mean) * (z - mean);
  return ss / static_cast<double>(replicates.size() - 1);
}

NoiseMatrix build_noise_matrix(const TaskDataset& task, const FidelityTable& fidelities, NoisePolicy policy) {
  NoiseMatrix out{Vector(task.size())};
  for (Index i = 0; i < task.size(); ++i) {
    const auto& m = task.measurements[static_cast<std::size_t>(i)];
    const double n = static_cast<double>(m.replicates.size());
    const auto s2 = sample_variance(m.replicates);
    double variance = 0.0;
    if (policy == NoisePolicy::sample_variance_only) {
      if (!s2) {
        throw Error(ErrorCode::insufficient_replicates,
                    "task " + std::to_string(task.task_id) + " point " + std::to_string(i) + " has " +
                        std::to_string(m.replicates.size()) + " replicate(s); sample variance needs 2");
      }
      variance = *s2;
    } else {
      const auto& f = find_fidelity(fidelities, m.fidelity_id);
      variance = (f.declared_variance_known || !s2) ? f.sigma * f.sigma : *s2;
    }
    out.diag(i) = variance / n;
  }
  return out;
}

NoiseMatrix floor_noise(NoiseMatrix noise, double floor) {
  noise.diag = noise.diag.cwiseMax(floor);
  return noise;
}

}  // namespace hmtmf
