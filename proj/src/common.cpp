#include "perfnet/common.hpp"

namespace perfnet {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_size: return "invalid_size";
    case Errc::not_regular: return "not_regular";
    case Errc::not_connected: return "not_connected";
    case Errc::validation: return "validation";
    case Errc::shape: return "shape";
    case Errc::unsupported_kind: return "unsupported_kind";
    case Errc::calibration: return "calibration";
    case Errc::no_fixed_point: return "no_fixed_point";
    case Errc::stability_violated: return "stability_violated";
    case Errc::inapplicable: return "inapplicable";
    case Errc::invariant: return "invariant";
    case Errc::contract: return "contract";
    case Errc::config: return "config";
    case Errc::dataset: return "dataset";
    case Errc::fit_unavailable: return "fit_unavailable";
  }
  return "unknown";
}

}  // namespace perfnet
