#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>

#include "dlm/table.hpp"

namespace dlm {

enum class Mechanism { MCAR, MAR, MNAR };

const char* mechanism_name(Mechanism m);

struct MissingnessSpec {
  Mechanism mechanism = Mechanism::MCAR;
  double rate = 0.0;  // in [0, 0.9]
  std::uint64_t seed = 0;
  std::optional<int> mar_driver;                 // required iff MAR
  std::optional<double> mnar_threshold_quantile; // required iff MNAR
};

using PositionMap = std::map<std::pair<int, int>, CellValue>;

struct InjectResult {
  RawTable degraded;
  PositionMap ground_truth;
};

// Masks observed cells per the mechanism, calibrated so the expected overall
// masked fraction equals spec.rate. MCAR masks independently; MAR ramps the
// masking probability linearly with the row's percentile in the driver
// column; MNAR elevates masking for cells above their column's threshold
// quantile and reduces it below, 3:1.
InjectResult inject(const RawTable& table, const MissingnessSpec& spec);

}  // namespace dlm
