#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsd/depthmap.hpp"
#include "fsd/errors.hpp"

namespace fsd {

/// Evaluation capping rule: ground-truth pixels are kept only when
/// min_cap < gt <= max_cap, and predictions are clamped into
/// [max(min_cap, log_eps), max_cap]. log_eps also floors the log metrics,
/// since a 0 m lower cap would otherwise blow them up.
struct CapPolicy {
    double min_cap = 0.0;   ///< [m]
    double max_cap = 50.0;  ///< [m]
    double log_eps = 1e-3;  ///< [m] floor applied inside log terms

    void validate() const {
        if (!(min_cap >= 0.0) || !(min_cap < max_cap))
            throw ConfigError("cap: need 0 <= min_cap < max_cap");
        if (!(log_eps > 0.0)) throw ConfigError("cap: log_eps must be > 0");
    }
};

/// Paired evaluation samples surviving the cap policy.
struct CappedSamples {
    std::vector<double> pred;  ///< clamped predictions
    std::vector<double> gt;    ///< kept ground-truth depths
};

/// Applies the cap policy to a dense prediction grid against a sparse ground
/// truth of matching dimensions.
inline CappedSamples apply_cap(const SparseDepthMap& pred, const SparseDepthMap& gt,
                               const CapPolicy& policy) {
    policy.validate();
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("apply_cap: dimension mismatch");
    const double lo = std::max(policy.min_cap, policy.log_eps);
    CappedSamples out;
    for (size_t i = 0; i < gt.depth.size(); ++i) {
        if (!gt.valid[i]) continue;
        const double g = gt.depth[i];
        if (!(g > policy.min_cap) || g > policy.max_cap) continue;
        out.pred.push_back(std::clamp(pred.depth[i], lo, policy.max_cap));
        out.gt.push_back(g);
    }
    return out;
}

/// Mergeable error sums; evaluate() is a thin wrapper around one of these.
/// Merging accumulators over disjoint pixel sets gives exactly the combined
/// evaluation.
struct MetricsAccumulator {
    double sq_sum = 0.0;      ///< sum (p - g)^2
    double sqlog_sum = 0.0;   ///< sum (log p - log g)^2, with the log_eps floor
    double ard_sum = 0.0;     ///< sum |p - g| / g
    double srd_sum = 0.0;     ///< sum (p - g)^2 / g
    long delta1 = 0, delta2 = 0, delta3 = 0;
    long count = 0;
    long log_floored = 0;  ///< samples where the log_eps floor engaged

    void add(double pred, double gt, double log_eps) {
        const double err = pred - gt;
        sq_sum += err * err;
        double pl = pred, gl = gt;
        if (pl < log_eps || gl < log_eps) {
            pl = std::max(pl, log_eps);
            gl = std::max(gl, log_eps);
            ++log_floored;
        }
        const double log_err = std::log(pl) - std::log(gl);
        sqlog_sum += log_err * log_err;
        ard_sum += std::abs(err) / gt;
        srd_sum += err * err / gt;
        const double ratio = std::max(pred / gt, gt / pred);
        if (ratio < 1.25) ++delta1;
        if (ratio < 1.25 * 1.25) ++delta2;
        if (ratio < 1.25 * 1.25 * 1.25) ++delta3;
        ++count;
    }

    void merge(const MetricsAccumulator& o) {
        sq_sum += o.sq_sum;
        sqlog_sum += o.sqlog_sum;
        ard_sum += o.ard_sum;
        srd_sum += o.srd_sum;
        delta1 += o.delta1;
        delta2 += o.delta2;
        delta3 += o.delta3;
        count += o.count;
        log_floored += o.log_floored;
    }
};

/// Standard depth evaluation report over the capped pixel set.
struct MetricsReport {
    double rmse = 0.0;      ///< sqrt(mean squared error) [m]
    double rmse_log = 0.0;  ///< sqrt(mean squared log error)
    double ard = 0.0;       ///< mean |p - g| / g
    double srd = 0.0;       ///< mean (p - g)^2 / g [m]
    double delta1 = 0.0;    ///< fraction with max(p/g, g/p) < 1.25
    double delta2 = 0.0;    ///< fraction with ratio < 1.25^2
    double delta3 = 0.0;    ///< fraction with ratio < 1.25^3
    long count = 0;         ///< evaluated pixels
    long log_floored = 0;   ///< pixels floored inside the log terms
};

inline MetricsReport report_from(const MetricsAccumulator& acc) {
    if (acc.count == 0) throw std::invalid_argument("evaluate: empty evaluation set");
    const double n = static_cast<double>(acc.count);
    MetricsReport r;
    r.rmse = std::sqrt(acc.sq_sum / n);
    r.rmse_log = std::sqrt(acc.sqlog_sum / n);
    r.ard = acc.ard_sum / n;
    r.srd = acc.srd_sum / n;
    r.delta1 = acc.delta1 / n;
    r.delta2 = acc.delta2 / n;
    r.delta3 = acc.delta3 / n;
    r.count = acc.count;
    r.log_floored = acc.log_floored;
    return r;
}

inline MetricsReport evaluate(const CappedSamples& samples, const CapPolicy& policy) {
    MetricsAccumulator acc;
    for (size_t i = 0; i < samples.gt.size(); ++i)
        acc.add(samples.pred[i], samples.gt[i], policy.log_eps);
    return report_from(acc);
}

inline MetricsReport evaluate(const SparseDepthMap& pred, const SparseDepthMap& gt,
                              const CapPolicy& policy) {
    return evaluate(apply_cap(pred, gt, policy), policy);
}

inline std::string report_to_json(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\n"
                  "  \"rmse\": %.17g,\n"
                  "  \"rmse_log\": %.17g,\n"
                  "  \"ard\": %.17g,\n"
                  "  \"srd\": %.17g,\n"
                  "  \"delta1\": %.17g,\n"
                  "  \"delta2\": %.17g,\n"
                  "  \"delta3\": %.17g,\n"
                  "  \"count\": %ld,\n"
                  "  \"log_floored\": %ld\n"
                  "}\n",
                  r.rmse, r.rmse_log, r.ard, r.srd, r.delta1, r.delta2, r.delta3, r.count,
                  r.log_floored);
    return buf;
}

inline std::string report_to_text(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "rmse: " << r.rmse << "\n"
       << "rmse_log: " << r.rmse_log << "\n"
       << "ard: " << r.ard << "\n"
       << "srd: " << r.srd << "\n"
       << "delta1: " << r.delta1 << "\n"
       << "delta2: " << r.delta2 << "\n"
       << "delta3: " << r.delta3 << "\n"
       << "count: " << r.count << "\n"
       << "log_floored: " << r.log_floored << "\n";
    return os.str();
}

}  // namespace fsd
