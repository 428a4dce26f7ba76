#include "dlm/inject.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/rng.hpp"

namespace dlm {

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::MCAR: return "MCAR";
    case Mechanism::MAR: return "MAR";
    case Mechanism::MNAR: return "MNAR";
  }
  return "?";
}

InjectResult inject(const RawTable& table, const MissingnessSpec& spec) {
  require(spec.rate >= 0.0 && spec.rate <= 0.9, ErrorCode::SpecInvalid,
          "rate must lie in [0, 0.9]");
  require(spec.mar_driver.has_value() == (spec.mechanism == Mechanism::MAR),
          ErrorCode::SpecInvalid, "mar_driver is required iff mechanism is MAR");
  require(spec.mnar_threshold_quantile.has_value() == (spec.mechanism == Mechanism::MNAR),
          ErrorCode::SpecInvalid, "threshold quantile is required iff mechanism is MNAR");
  if (spec.mnar_threshold_quantile) {
    require(*spec.mnar_threshold_quantile > 0.0 && *spec.mnar_threshold_quantile < 1.0,
            ErrorCode::SpecInvalid, "threshold quantile must lie in (0,1)");
  }

  const int R = table.n_rows, C = table.n_cols;
  std::int64_t n_observed = 0;
  for (const auto& cell : table.cells) {
    if (!cell.is_missing()) ++n_observed;
  }
  require(n_observed >= 1, ErrorCode::SpecInvalid, "table has no observed cells");
  const double observed_frac =
      static_cast<double>(n_observed) / static_cast<double>(table.cells.size());
  require(observed_frac >= spec.rate, ErrorCode::AlreadyTooMissing,
          "observed fraction below requested rate");

  InjectResult result;
  result.degraded = table;
  if (spec.rate == 0.0) return result;

  // Per-cell weights; masking probability is rate-calibrated by normalizing
  // against the total weight over eligible cells.
  std::vector<double> weight(static_cast<std::size_t>(R) * C, 0.0);
  auto cell_weight = [&](int r, int c) -> double& {
    return weight[static_cast<std::size_t>(r) * C + c];
  };

  switch (spec.mechanism) {
    case Mechanism::MCAR: {
      for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
          if (!table.at(r, c).is_missing()) cell_weight(r, c) = 1.0;
        }
      }
      break;
    }
    case Mechanism::MAR: {
      const int d = *spec.mar_driver;
      require(d >= 0 && d < C, ErrorCode::SpecInvalid, "mar_driver out of range");
      std::vector<double> driver_vals;
      for (int r = 0; r < R; ++r) {
        if (table.at(r, d).is_numeric()) driver_vals.push_back(table.at(r, d).number());
      }
      require(!driver_vals.empty(), ErrorCode::SpecInvalid,
              "MAR driver column has no observed numeric values");
      auto percentile = [&](double v) {
        double less = 0, equal = 0;
        for (double x : driver_vals) {
          if (x < v) ++less;
          else if (x == v) ++equal;
        }
        return (less + 0.5 * equal) / static_cast<double>(driver_vals.size());
      };
      for (int r = 0; r < R; ++r) {
        double w = 0.5;  // rows with an unobserved or non-numeric driver are neutral
        if (table.at(r, d).is_numeric()) w = percentile(table.at(r, d).number());
        for (int c = 0; c < C; ++c) {
          if (c == d) continue;  // driver stays observed
          if (!table.at(r, c).is_missing()) cell_weight(r, c) = w;
        }
      }
      break;
    }
    case Mechanism::MNAR: {
      const double q = *spec.mnar_threshold_quantile;
      for (int c = 0; c < C; ++c) {
        std::vector<double> observed;
        for (int r = 0; r < R; ++r) {
          if (table.at(r, c).is_numeric()) observed.push_back(table.at(r, c).number());
        }
        const bool has_threshold = !observed.empty();
        const double threshold = has_threshold ? quantile(observed, q) : 0.0;
        for (int r = 0; r < R; ++r) {
          const auto& cell = table.at(r, c);
          if (cell.is_missing()) continue;
          if (cell.is_numeric() && has_threshold) {
            cell_weight(r, c) = cell.number() > threshold ? 3.0 : 1.0;
          } else {
            cell_weight(r, c) = 1.0;  // non-numeric cells carry no self signal
          }
        }
      }
      break;
    }
  }

  double total_weight = 0.0;
  for (double w : weight) total_weight += w;
  require(total_weight > 0.0, ErrorCode::SpecInvalid, "no eligible cells to mask");
  // Rate is the expected masked fraction of observed cells; for MCAR this
  // reduces to masking each observed cell with probability exactly rate.
  const double target_masked = spec.rate * static_cast<double>(n_observed);

  Rng rng(derive_seed(spec.seed, 0x696e6a65, static_cast<std::uint64_t>(spec.mechanism)));
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      const double w = cell_weight(r, c);
      if (w <= 0.0) continue;
      const double p = std::min(0.999, target_masked * w / total_weight);
      if (rng.bernoulli(p)) {
        result.ground_truth[{r, c}] = table.at(r, c);
        result.degraded.at(r, c) = CellValue::missing();
      }
    }
  }
  return result;
}

}  // namespace dlm
