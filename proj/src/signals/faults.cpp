#include "signals/faults.hpp"

#include <cmath>

#include "common/errors.hpp"

namespace pbcnn::signals {

std::string fault_kind_id(FaultKind kind) {
  switch (kind) {
    case FaultKind::bias: return "bias";
    case FaultKind::drift: return "drift";
    case FaultKind::scaling: return "scaling";
    case FaultKind::precision: return "precision";
  }
  return "unknown";
}

FaultKind parse_fault_kind(const std::string& id) {
  for (FaultKind k : {FaultKind::bias, FaultKind::drift, FaultKind::scaling, FaultKind::precision}) {
    if (fault_kind_id(k) == id) return k;
  }
  throw ContractError("unknown sensor fault kind '" + id + "'");
}

void FaultSpec::validate() const {
  if (std::isnan(snr_db)) throw ContractError("fault snr_db must not be NaN");
  if (!std::isfinite(tau)) throw ContractError("fault tau must be finite");
  if ((kind == FaultKind::bias || kind == FaultKind::precision) && !(p2p_reference > 0.0)) {
    throw ContractError(fault_kind_id(kind) + " fault needs a positive peak-to-peak reference");
  }
}

double FaultSpec::nominal() const {
  switch (kind) {
    case FaultKind::bias: return tau * p2p_reference;
    case FaultKind::drift:
    case FaultKind::scaling: return tau;
    case FaultKind::precision: return 0.0;
  }
  throw ContractError("unknown fault kind");
}

double FaultSpec::noise_std() const {
  if (kind == FaultKind::precision) return std::abs(tau * p2p_reference);
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::abs(nominal()) / std::sqrt(std::pow(10.0, snr_db / 10.0));
}

Array inject_fault(const Array& segment, const FaultSpec& spec, double sample_rate, Rng& rng) {
  spec.validate();
  if (!(sample_rate > 0.0)) throw ContractError("inject_fault: sample rate must be positive");
  const double nominal = spec.nominal();
  const double sd = spec.noise_std();
  auto draw = [&]() { return sd > 0.0 ? rng.normal(0.0, sd) : 0.0; };
  Array out = segment;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double x = segment[k];
    switch (spec.kind) {
      case FaultKind::bias: out[k] = x + (nominal + draw()); break;
      case FaultKind::drift:
        out[k] = x + (nominal + draw()) * (static_cast<double>(k) / sample_rate);
        break;
      case FaultKind::scaling: out[k] = (nominal + draw()) * x; break;
      case FaultKind::precision: out[k] = x + draw(); break;
    }
  }
  return out;
}

}  // namespace pbcnn::signals
