#pragma once

#include <span>

namespace ctwin::eval {

/// Series arguments must have equal, non-zero length (ContractError otherwise).

/// Mean of |t - p| / |t| as a fraction, skipping entries with |t| < 1e-9.
/// UndefinedMetricError when every entry is skipped.
double mape(std::span<const double> truth, std::span<const double> pred);

/// RMSE over the range of the true series; UndefinedMetricError when that range is 0.
double nrmse(std::span<const double> truth, std::span<const double> pred);

/// Hellinger distance after normalizing both series to unit sum. Two all-zero
/// series give 0; exactly one all-zero series is undefined. Negative entries are a ContractError.
double hellinger(std::span<const double> truth, std::span<const double> pred);

/// Wasserstein-1 on index support via CDF differences, divided by (n - 1) so the
/// result lies in [0, 1]. Same normalization and zero rules as hellinger; n >= 2.
double emd(std::span<const double> truth, std::span<const double> pred);

double mae(std::span<const double> truth, std::span<const double> pred);
double mse(std::span<const double> truth, std::span<const double> pred);
double rmse(std::span<const double> truth, std::span<const double> pred);

}  // namespace ctwin::eval
