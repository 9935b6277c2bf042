#include "lyaplearn/lyap.hpp"

namespace lyl {

ChaosReport is_chaotic_attractor(const SpectrumEstimate& s) {
  ChaosReport r;
  r.largest = s.exponents.empty() ? 0.0 : s.exponents.front();
  r.sum = s.sum_exponents;
  r.chaotic = !s.exponents.empty() && r.largest > 0.0 && r.sum < 0.0;
  return r;
}

nlohmann::json spectrum_report(const SpectrumEstimate& s) {
  return {{"exponents", s.exponents},
          {"horizon", s.horizon},
          {"sum", s.sum_exponents},
          {"chaotic", is_chaotic_attractor(s).chaotic}};
}

}  // namespace lyl
