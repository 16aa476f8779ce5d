#pragma once

#include <string>

#include "common/random.hpp"
#include "diffcore/array.hpp"

namespace pbcnn::signals {

using diffcore::Array;

enum class FaultKind { bias, drift, scaling, precision };

std::string fault_kind_id(FaultKind kind);
FaultKind parse_fault_kind(const std::string& id);

/// Sensor fault initiated at the first sample of a segment.
///   bias:      y_k = x_k + (tau * p2p + n_k)
///   drift:     y_k = x_k + (tau + n_k) * k / sample_rate     (tau in 1/s)
///   scaling:   y_k = (tau + n_k) * x_k
///   precision: y_k = x_k + n_k,  n_k ~ N(0, (tau * p2p)^2)
/// For the first three kinds n_k ~ N(0, nominal^2 / 10^(snr_db/10)); an
/// infinite snr_db disables the parameter noise.
struct FaultSpec {
  FaultKind kind = FaultKind::bias;
  double tau = 0.0;
  double snr_db = 5.0;
  double p2p_reference = 0.0;

  void validate() const;
  /// Nominal value of the perturbed parameter (offset, slope or factor).
  double nominal() const;
  /// Standard deviation of the per-sample parameter noise.
  double noise_std() const;
};

Array inject_fault(const Array& segment, const FaultSpec& spec, double sample_rate, Rng& rng);

}  // namespace pbcnn::signals
