#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gnstk {

/// One step's paired gradient-norm measurements feeding the unbiased
/// estimators: ||G_big||^2 from the full batch of size b_big, and the mean of
/// n_small squared norms measured at batch size b_small.
struct GradStats {
    double g_big_sqnorm = 0.0;
    double g_small_sqnorm_mean = 0.0;
    std::int64_t b_big = 0;
    std::int64_t b_small = 0;
    std::int64_t n_small = 1;
};

/// Estimates of ||G||^2 (g2) and tr(Sigma) (s); either may be negative on a
/// single noisy sample. b_simple = s / g2 is only defined away from zero g2.
struct GnsEstimate {
    double g2 = 0.0;
    double s = 0.0;
    double b_simple = 0.0;
    bool b_simple_defined = false;
};

/// |g2| below this guard makes the GNS ratio undefined rather than NaN.
inline constexpr double kGnsRatioGuard = 1e-12;

struct EmaState {
    double alpha = 1.0;         // weight on the newest sample, in (0, 1]
    double value = 0.0;
    std::int64_t count = 0;
};

enum class LayerType { Embedding, Linear, LayerNorm };

std::string layer_type_name(LayerType t);

struct LayerKey {
    std::string name;
    LayerType type = LayerType::Linear;

    friend bool operator<(const LayerKey& a, const LayerKey& b) {
        if (a.name != b.name) return a.name < b.name;
        return static_cast<int>(a.type) < static_cast<int>(b.type);
    }
    friend bool operator==(const LayerKey& a, const LayerKey& b) { return a.name == b.name && a.type == b.type; }
};

/// (B_big * ||G_big||^2 - B_small * ||G_small||^2) / (B_big - B_small).
double estimate_g2(const GradStats& stats);

/// (||G_small||^2 - ||G_big||^2) / (1/B_small - 1/B_big).
double estimate_s(const GradStats& stats);

GnsEstimate make_gns_estimate(double g2, double s);

/// First sample initializes the state; afterwards value <- (1-a)*value + a*x.
EmaState ema_update(EmaState state, double x);

/// GNS ratio of the two smoothed series; both states need at least one sample.
GnsEstimate smoothed_gns(const EmaState& g2_ema, const EmaState& s_ema);

/// Sums squared norms across the selected layers (squared norms over a
/// parameter union add). All entries must share b_big, b_small and n_small.
/// No filter aggregates everything.
GradStats aggregate(const std::map<LayerKey, GradStats>& stats_by_layer, std::optional<LayerType> group);

struct JackknifeResult {
    double ratio = 0.0;
    double std_error = 0.0;
};

/// Ratio-of-means estimator mean(s)/mean(g) with its leave-one-out jackknife
/// standard error. Needs n >= 2 and nonzero leave-one-out denominators.
JackknifeResult jackknife_ratio_stderr(std::span<const std::pair<double, double>> pairs);

/// Raw estimator series aligned by step.
struct GnsSeries {
    std::vector<double> g2;
    std::vector<double> s;
};

struct RegressionRow {
    LayerType type;
    double alpha = 1.0;
    double slope = 0.0;
    double pearson_r = 0.0;
    bool slope_defined = false;
    bool r_defined = false;
};

/// For each (layer type, alpha): EMA-smooth the g2/s components of both the
/// total and the per-type series with that alpha, form the GNS ratios, and
/// regress total-vs-type by ordinary least squares (intercept fitted).
/// Steps where either ratio is undefined are dropped pairwise; fewer than 3
/// aligned points is an error.
std::vector<RegressionRow> regress_layer_gns(const GnsSeries& total, const std::map<LayerType, GnsSeries>& per_type,
                                             std::span<const double> alphas);

}  // namespace gnstk
