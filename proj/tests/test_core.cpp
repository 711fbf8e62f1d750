#include <limits>

#include "doctest.h"
#include "fedsim/core.hpp"

using namespace fedsim;

TEST_CASE("axpy computes a*x + y and checks shapes") {
  Vector x(3), y(3);
  x << 1, 2, 3;
  y << 10, 20, 30;
  Vector r = axpy(2.0, x, y);
  CHECK(r[0] == 12);
  CHECK(r[1] == 24);
  CHECK(r[2] == 36);
  Vector bad(2);
  CHECK_THROWS_AS(axpy(1.0, x, bad), DimensionError);
}

TEST_CASE("finiteness helpers") {
  Vector ok(2);
  ok << 1, -2;
  CHECK(all_finite(ok));
  CHECK_NOTHROW(require_finite(ok, "ok"));

  Vector nan_v(2);
  nan_v << 1, std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(nan_v));
  CHECK_THROWS_AS(require_finite(nan_v, "nan case"), NumericError);

  Vector inf_v(1);
  inf_v << std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(inf_v));

  Vector empty;
  CHECK(all_finite(empty));
}

TEST_CASE("LocalDataset shape accessors") {
  LocalDataset d;
  d.features = Matrix::Zero(4, 3);
  CHECK(d.n() == 4);
  CHECK(d.dim() == 3);
  CHECK_FALSE(d.has_labels());
  d.labels = Vector::Ones(4);
  CHECK(d.has_labels());
}
