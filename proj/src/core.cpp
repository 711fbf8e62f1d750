#include "fedsim/core.hpp"

#include <cmath>
#include <sstream>

namespace fedsim {

Vector axpy(double a, const Vector& x, const Vector& y) {
  if (x.size() != y.size()) {
    std::ostringstream msg;
    msg << "axpy: size mismatch (" << x.size() << " vs " << y.size() << ")";
    throw DimensionError(msg.str());
  }
  return a * x + y;
}

bool all_finite(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

void require_finite(const Vector& v, std::string_view what) {
  if (!all_finite(v)) {
    throw NumericError("non-finite values in " + std::string(what));
  }
}

}  // namespace fedsim
