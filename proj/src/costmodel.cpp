#include "gnstk/costmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("costmodel: " + msg);
}

void check(const CostShape& s) {
    if (s.b < 1 || s.t < 1 || s.k < 1 || s.l < 1) fail("shape dims must be positive");
    if (s.bytes_per_value < 1) fail("bytes_per_value must be positive");
}

}  // namespace

std::string cost_method_name(CostMethod m) {
    return m == CostMethod::Simultaneous ? "simultaneous" : "frobenius";
}

CostPair flops(const CostShape& s, CostMethod method) {
    check(s);
    const std::int64_t b = s.b, t = s.t, k = s.k, l = s.l;
    CostPair out;
    if (method == CostMethod::Simultaneous) {
        out.weight_grad = b * k * l * (2 * t - 1) + k * l * (b - 1);
        out.grad_norms = b * k * l + b * (k * l - 1);
    } else {
        out.weight_grad = k * l * (2 * b * t - 1);
        out.grad_norms = b * t * t * (2 * k + 2 * l - 2) + b * t * t;
    }
    return out;
}

CostPair io_values(const CostShape& s, CostMethod method) {
    check(s);
    const std::int64_t b = s.b, t = s.t, k = s.k, l = s.l;
    CostPair out;
    if (method == CostMethod::Simultaneous) {
        out.weight_grad = b * k * l + b * k * t + b * l * t;
        out.grad_norms = b * k * l + b;
    } else {
        out.weight_grad = b * k * t + b * l * t + k * l;
        out.grad_norms = 2 * b * t * t + b;
    }
    return out;
}

CostPair io_bytes(const CostShape& s, CostMethod method) {
    CostPair v = io_values(s, method);
    return {v.weight_grad * s.bytes_per_value, v.grad_norms * s.bytes_per_value};
}

double crossover_t(std::int64_t k, std::int64_t l, CostCriterion criterion) {
    if (k < 1 || l < 1) fail("dims must be positive");
    const double kd = static_cast<double>(k);
    const double ld = static_cast<double>(l);
    if (criterion == CostCriterion::IO) return std::sqrt(2.0 * kd * ld) / 2.0;
    return std::sqrt((2.0 * kd * ld - 1.0) / (2.0 * kd + 2.0 * ld - 1.0));
}

std::vector<SweepRow> sweep(std::span<const CostShape> shapes) {
    if (shapes.empty()) fail("empty sweep grid");
    std::vector<SweepRow> rows;
    rows.reserve(shapes.size() * 2);
    for (const CostShape& s : shapes) {
        const CostPair frob_flops = flops(s, CostMethod::Frobenius);
        for (CostMethod m : {CostMethod::Simultaneous, CostMethod::Frobenius}) {
            const CostPair f = flops(s, m);
            const CostPair io = io_values(s, m);
            SweepRow row;
            row.method = m;
            row.b = s.b;
            row.t = s.t;
            row.k = s.k;
            row.l = s.l;
            row.flops_wg = f.weight_grad;
            row.flops_norms = f.grad_norms;
            row.io_wg = io.weight_grad;
            row.io_norms = io.grad_norms;
            row.ratio_vs_frobenius =
                static_cast<double>(f.grad_norms) / static_cast<double>(frob_flops.grad_norms);
            rows.push_back(row);
        }
    }
    return rows;
}

std::int64_t layernorm_norms_io_values(const CostShape& s) {
    check(s);
    return s.b * s.k + s.b;
}

}  // namespace gnstk
