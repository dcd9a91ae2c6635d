#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gnstk {

/// Shape of one linear-layer backward: batch B, sequence length T, input
/// dimension K, output dimension L. K and L are sometimes called P and D in
/// discussions of the crossover bound 2T^2 < PD; they are the same dims.
struct CostShape {
    std::int64_t b = 1;
    std::int64_t t = 1;
    std::int64_t k = 1;
    std::int64_t l = 1;
    std::int64_t bytes_per_value = 4;
};

enum class CostMethod { Simultaneous, Frobenius };
enum class CostCriterion { IO, FLOPS };

std::string cost_method_name(CostMethod m);

struct CostPair {
    std::int64_t weight_grad = 0;
    std::int64_t grad_norms = 0;
};

/// Closed-form FLOP counts (multiply and add each cost 1; reductions of n
/// terms pay n-1 adds).
CostPair flops(const CostShape& shape, CostMethod method);

/// Closed-form I/O in number of values moved between DRAM and compute.
/// Inputs are charged to the weight-gradient phase; the norm phase pays for
/// the intermediates it produces or re-reads plus the B outputs.
CostPair io_values(const CostShape& shape, CostMethod method);

/// io_values scaled by bytes_per_value.
CostPair io_bytes(const CostShape& shape, CostMethod method);

/// Sequence length at which the simultaneous method's grad-norm cost equals
/// the Frobenius trick's, for the given criterion (continuous relaxation).
double crossover_t(std::int64_t k, std::int64_t l, CostCriterion criterion);

struct SweepRow {
    CostMethod method;
    std::int64_t b, t, k, l;
    std::int64_t flops_wg, flops_norms, io_wg, io_norms;
    double ratio_vs_frobenius;  // grad-norm FLOPs relative to Frobenius
};

/// Both methods evaluated over the shape grid.
std::vector<SweepRow> sweep(std::span<const CostShape> shapes);

/// LayerNorm per-example-norm I/O in values (read the K-vector gradient rows,
/// write B norms). This is an extension for comparison plots; the reference
/// tables cover linear layers only.
std::int64_t layernorm_norms_io_values(const CostShape& shape);

}  // namespace gnstk
