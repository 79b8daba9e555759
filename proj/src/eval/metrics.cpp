#include "corridor_twin/eval/metrics.hpp"

#include "corridor_twin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ctwin::eval {

namespace {

void check_pair(std::span<const double> truth, std::span<const double> pred, const char* metric)
{
    if (truth.size() != pred.size())
        throw ContractError(std::string(metric) + ": series lengths differ (" + std::to_string(truth.size()) + " vs " +
                            std::to_string(pred.size()) + ")");
    if (truth.empty())
        throw ContractError(std::string(metric) + ": empty series");
}

/// Unit-sum copies of both series, or a flag when both are all zero.
struct Normalized {
    std::vector<double> truth, pred;
    bool both_zero = false;
};

Normalized normalize(std::span<const double> truth, std::span<const double> pred, const char* metric)
{
    check_pair(truth, pred, metric);
    double st = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0.0 || pred[i] < 0.0 || std::isnan(truth[i]) || std::isnan(pred[i]))
            throw ContractError(std::string(metric) + ": entry " + std::to_string(i) + " is negative or NaN");
        st += truth[i];
        sp += pred[i];
    }
    Normalized n;
    if (st == 0.0 && sp == 0.0) {
        n.both_zero = true;
        return n;
    }
    if (st == 0.0 || sp == 0.0)
        throw UndefinedMetricError(std::string(metric) + ": one series has zero total mass");
    n.truth.resize(truth.size());
    n.pred.resize(pred.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        n.truth[i] = truth[i] / st;
        n.pred[i] = pred[i] / sp;
    }
    return n;
}

}  // namespace

double mape(std::span<const double> truth, std::span<const double> pred)
{
    check_pair(truth, pred, "MAPE");
    double acc = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (std::abs(truth[i]) < 1e-9)
            continue;
        acc += std::abs(truth[i] - pred[i]) / std::abs(truth[i]);
        ++kept;
    }
    if (kept == 0)
        throw UndefinedMetricError("MAPE: every true entry is zero");
    return acc / static_cast<double>(kept);
}

double mse(std::span<const double> truth, std::span<const double> pred)
{
    check_pair(truth, pred, "MSE");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        acc += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    return acc / static_cast<double>(truth.size());
}

double rmse(std::span<const double> truth, std::span<const double> pred) { return std::sqrt(mse(truth, pred)); }

double mae(std::span<const double> truth, std::span<const double> pred)
{
    check_pair(truth, pred, "MAE");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        acc += std::abs(truth[i] - pred[i]);
    return acc / static_cast<double>(truth.size());
}

double nrmse(std::span<const double> truth, std::span<const double> pred)
{
    check_pair(truth, pred, "NRMSE");
    const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
    const double range = *hi - *lo;
    if (!(range > 0.0))
        throw UndefinedMetricError("NRMSE: the true series is constant");
    return rmse(truth, pred) / range;
}

double hellinger(std::span<const double> truth, std::span<const double> pred)
{
    const auto n = normalize(truth, pred, "HLD");
    if (n.both_zero)
        return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n.truth.size(); ++i) {
        const double d = std::sqrt(n.truth[i]) - std::sqrt(n.pred[i]);
        acc += d * d;
    }
    return std::min(1.0, std::sqrt(acc) / std::sqrt(2.0));
}

double emd(std::span<const double> truth, std::span<const double> pred)
{
    if (truth.size() < 2)
        throw ContractError("EMD: need at least 2 entries, got " + std::to_string(truth.size()));
    const auto n = normalize(truth, pred, "EMD");
    if (n.both_zero)
        return 0.0;
    double cdf_t = 0.0, cdf_p = 0.0, acc = 0.0;
    for (std::size_t i = 0; i + 1 < n.truth.size(); ++i) {
        cdf_t += n.truth[i];
        cdf_p += n.pred[i];
        acc += std::abs(cdf_t - cdf_p);
    }
    return acc / static_cast<double>(n.truth.size() - 1);
}

}  // namespace ctwin::eval
