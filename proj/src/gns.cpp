#include "gnstk/gns.hpp"

#include <cmath>
#include <stdexcept>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("gns: " + msg);
}

void check_batches(const GradStats& stats) {
    if (stats.b_small < 1) fail("b_small must be >= 1");
    if (stats.b_big <= stats.b_small) fail("b_big must exceed b_small");
    if (stats.n_small < 1) fail("n_small must be >= 1");
}

}  // namespace

std::string layer_type_name(LayerType t) {
    switch (t) {
        case LayerType::Embedding: return "embedding";
        case LayerType::Linear: return "linear";
        case LayerType::LayerNorm: return "layernorm";
    }
    fail("unknown layer type");
}

double estimate_g2(const GradStats& stats) {
    check_batches(stats);
    const double bb = static_cast<double>(stats.b_big);
    const double bs = static_cast<double>(stats.b_small);
    return (bb * stats.g_big_sqnorm - bs * stats.g_small_sqnorm_mean) / (bb - bs);
}

double estimate_s(const GradStats& stats) {
    check_batches(stats);
    const double bb = static_cast<double>(stats.b_big);
    const double bs = static_cast<double>(stats.b_small);
    return (stats.g_small_sqnorm_mean - stats.g_big_sqnorm) / (1.0 / bs - 1.0 / bb);
}

GnsEstimate make_gns_estimate(double g2, double s) {
    GnsEstimate e;
    e.g2 = g2;
    e.s = s;
    if (std::abs(g2) >= kGnsRatioGuard) {
        e.b_simple = s / g2;
        e.b_simple_defined = true;
    }
    return e;
}

EmaState ema_update(EmaState state, double x) {
    if (!(state.alpha > 0.0) || state.alpha > 1.0) fail("ema alpha must be in (0, 1]");
    if (state.count == 0)
        state.value = x;
    else
        state.value = (1.0 - state.alpha) * state.value + state.alpha * x;
    ++state.count;
    return state;
}

GnsEstimate smoothed_gns(const EmaState& g2_ema, const EmaState& s_ema) {
    if (g2_ema.count < 1 || s_ema.count < 1) fail("smoothed_gns needs at least one sample in each state");
    return make_gns_estimate(g2_ema.value, s_ema.value);
}

GradStats aggregate(const std::map<LayerKey, GradStats>& stats_by_layer, std::optional<LayerType> group) {
    GradStats out;
    bool first = true;
    for (const auto& [key, stats] : stats_by_layer) {
        if (group && key.type != *group) continue;
        if (first) {
            out = stats;
            out.g_big_sqnorm = 0.0;
            out.g_small_sqnorm_mean = 0.0;
            first = false;
        } else if (stats.b_big != out.b_big || stats.b_small != out.b_small || stats.n_small != out.n_small) {
            fail("aggregate requires matching batch sizes across layers");
        }
        out.g_big_sqnorm += stats.g_big_sqnorm;
        out.g_small_sqnorm_mean += stats.g_small_sqnorm_mean;
    }
    if (first) fail("aggregate over an empty selection");
    return out;
}

JackknifeResult jackknife_ratio_stderr(std::span<const std::pair<double, double>> pairs) {
    const std::size_t n = pairs.size();
    if (n < 2) fail("jackknife needs at least 2 pairs");
    double sum_s = 0.0, sum_g = 0.0;
    for (const auto& [s, g] : pairs) {
        sum_s += s;
        sum_g += g;
    }
    if (sum_g == 0.0) fail("jackknife ratio denominator is zero");

    JackknifeResult res;
    const double nd = static_cast<double>(n);
    res.ratio = (sum_s / nd) / (sum_g / nd);

    std::vector<double> loo(n);
    double loo_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = sum_g - pairs[i].second;
        if (denom == 0.0) fail("jackknife leave-one-out denominator is zero");
        loo[i] = (sum_s - pairs[i].first) / denom;
        loo_mean += loo[i];
    }
    loo_mean /= nd;
    double ss = 0.0;
    for (double r : loo) {
        const double d = r - loo_mean;
        ss += d * d;
    }
    res.std_error = std::sqrt((nd - 1.0) / nd * ss);
    return res;
}

namespace {

// GNS ratio series under one smoothing alpha; entries without a defined ratio
// are marked absent.
std::vector<std::optional<double>> smoothed_ratio_series(const GnsSeries& series, double alpha) {
    std::vector<std::optional<double>> out;
    out.reserve(series.g2.size());
    EmaState g2_ema{alpha}, s_ema{alpha};
    for (std::size_t i = 0; i < series.g2.size(); ++i) {
        g2_ema = ema_update(g2_ema, series.g2[i]);
        s_ema = ema_update(s_ema, series.s[i]);
        GnsEstimate e = smoothed_gns(g2_ema, s_ema);
        if (e.b_simple_defined)
            out.push_back(e.b_simple);
        else
            out.push_back(std::nullopt);
    }
    return out;
}

}  // namespace

std::vector<RegressionRow> regress_layer_gns(const GnsSeries& total, const std::map<LayerType, GnsSeries>& per_type,
                                             std::span<const double> alphas) {
    if (total.g2.size() != total.s.size()) fail("total series components misaligned");
    std::vector<RegressionRow> rows;
    for (const auto& [type, series] : per_type) {
        if (series.g2.size() != total.g2.size() || series.s.size() != total.s.size())
            fail("per-type series not aligned with total");
        for (double alpha : alphas) {
            auto ys = smoothed_ratio_series(total, alpha);
            auto xs = smoothed_ratio_series(series, alpha);
            std::vector<double> x, y;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (xs[i] && ys[i]) {
                    x.push_back(*xs[i]);
                    y.push_back(*ys[i]);
                }
            }
            if (x.size() < 3) fail("fewer than 3 aligned points for regression");
            const double nd = static_cast<double>(x.size());
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                mx += x[i];
                my += y[i];
            }
            mx /= nd;
            my /= nd;
            double sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                sxx += (x[i] - mx) * (x[i] - mx);
                syy += (y[i] - my) * (y[i] - my);
                sxy += (x[i] - mx) * (y[i] - my);
            }
            RegressionRow row;
            row.type = type;
            row.alpha = alpha;
            if (sxx > 0.0) {
                row.slope = sxy / sxx;
                row.slope_defined = true;
                if (syy > 0.0) {
                    row.pearson_r = sxy / std::sqrt(sxx * syy);
                    row.r_defined = true;
                }
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace gnstk
