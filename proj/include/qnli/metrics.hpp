#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "qnli/common.hpp"

namespace qnli {

// Joint (true-bin, predicted-bin) counts: 3x3 class confusion for
// inference, 4x4 equal-width bins over [0,1] for relatedness.
struct JointCounts {
    int bins = 0;
    std::vector<long long> counts;  // row = true, col = predicted

    explicit JointCounts(int B) : bins(B), counts(std::size_t(B) * B, 0) {}

    long long& at(int y, int yhat) {
        return counts[std::size_t(y) * bins + yhat];
    }
    long long at(int y, int yhat) const {
        return counts[std::size_t(y) * bins + yhat];
    }

    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }

    JointCounts transposed() const {
        JointCounts out(bins);
        for (int y = 0; y < bins; ++y)
            for (int p = 0; p < bins; ++p) out.at(p, y) = at(y, p);
        return out;
    }
};

inline int bin_of(double v, int bins) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    int b = int(v * bins);
    return b >= bins ? bins - 1 : b;
}

inline JointCounts joint_from_labels(const std::vector<int>& truth,
                                     const std::vector<int>& pred,
                                     int bins = 3) {
    if (truth.size() != pred.size())
        throw malformed_input("truth/prediction size mismatch");
    JointCounts j(bins);
    for (std::size_t i = 0; i < truth.size(); ++i) ++j.at(truth[i], pred[i]);
    return j;
}

inline JointCounts joint_from_scores(const std::vector<double>& truth,
                                     const std::vector<double>& pred,
                                     int bins = 4) {
    if (truth.size() != pred.size())
        throw malformed_input("truth/prediction size mismatch");
    JointCounts j(bins);
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++j.at(bin_of(truth[i], bins), bin_of(pred[i], bins));
    return j;
}

/// Plug-in mutual information in nats, with 0 log(0/x) := 0.
inline double mutual_information(const JointCounts& j) {
    const double total = double(j.total());
    if (total <= 0.0) throw malformed_input("empty joint counts");
    std::vector<double> py(std::size_t(j.bins), 0.0), pp(std::size_t(j.bins), 0.0);
    for (int y = 0; y < j.bins; ++y)
        for (int p = 0; p < j.bins; ++p) {
            py[std::size_t(y)] += double(j.at(y, p)) / total;
            pp[std::size_t(p)] += double(j.at(y, p)) / total;
        }
    double info = 0.0;
    for (int y = 0; y < j.bins; ++y)
        for (int p = 0; p < j.bins; ++p) {
            double pyp = double(j.at(y, p)) / total;
            if (pyp > 0.0)
                info += pyp * std::log(pyp / (py[std::size_t(y)] * pp[std::size_t(p)]));
        }
    return info < 0.0 ? 0.0 : info;
}

/// Marginal entropy in nats; axis 0 = true labels, 1 = predictions.
inline double marginal_entropy(const JointCounts& j, int axis) {
    const double total = double(j.total());
    double h = 0.0;
    for (int k = 0; k < j.bins; ++k) {
        double pk = 0.0;
        for (int o = 0; o < j.bins; ++o)
            pk += double(axis == 0 ? j.at(k, o) : j.at(o, k)) / total;
        if (pk > 0.0) h -= pk * std::log(pk);
    }
    return h;
}

inline double igpp(double delta_i, long long n_params) {
    if (n_params <= 0) throw malformed_input("parameter count must be > 0");
    return delta_i / double(n_params);
}

/// Gradient-normalized variant; a zero gradient norm leaves the value
/// undefined (recorded as missing, never as zero).
inline std::optional<double> iggp(double delta_i, long long n_params,
                                  double grad_norm) {
    if (n_params <= 0) throw malformed_input("parameter count must be > 0");
    if (grad_norm == 0.0) return std::nullopt;
    return delta_i / (double(n_params) * grad_norm);
}

/// Unweighted mean of per-class F1; a class with no support in either truth
/// or prediction contributes 0.
inline double macro_f1(const JointCounts& j) {
    if (j.total() <= 0) throw malformed_input("empty joint counts");
    double sum = 0.0;
    for (int c = 0; c < j.bins; ++c) {
        long long tp = j.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < j.bins; ++o) {
            if (o != c) {
                fp += j.at(o, c);
                fn += j.at(c, o);
            }
        }
        double denom = double(2 * tp + fp + fn);
        sum += denom > 0.0 ? 2.0 * double(tp) / denom : 0.0;
    }
    return sum / j.bins;
}

/// Gaussian MLE log-likelihood with sigma^2 = MSE. MSE of exactly zero
/// returns +infinity as a sentinel.
inline double log_likelihood_regression(double mse, long long n) {
    if (n <= 0) throw malformed_input("n must be > 0");
    if (mse < 0.0) throw malformed_input("MSE must be >= 0");
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -(double(n) / 2.0) * (std::log(2.0 * std::numbers::pi * mse) + 1.0);
}

inline double log_likelihood_classification(double mean_ce, long long n) {
    if (n <= 0) throw malformed_input("n must be > 0");
    return -double(n) * mean_ce;
}

inline double aic(long long k, double logl) {
    if (k <= 0) throw malformed_input("k must be > 0");
    return 2.0 * double(k) - 2.0 * logl;
}

inline double bic(long long k, long long n, double logl) {
    if (k <= 0 || n <= 0) throw malformed_input("k and n must be > 0");
    return double(k) * std::log(double(n)) - 2.0 * logl;
}

}  // namespace qnli
