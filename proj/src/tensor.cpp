#include "gnstk/tensor.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("tensor: " + msg);
}

Index shape_product(const Shape& shape) {
    Index n = 1;
    for (Index e : shape) {
        if (e < 0) fail("negative extent");
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
    init_strides();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != static_cast<Index>(data_.size()))
        fail("data length does not match shape product");
    init_strides();
}

Tensor Tensor::scalar(double v) {
    return Tensor({}, {v});
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

void Tensor::init_strides() {
    strides_.assign(shape_.size(), 1);
    for (Index d = rank() - 2; d >= 0; --d)
        strides_[static_cast<std::size_t>(d)] = strides_[static_cast<std::size_t>(d + 1)] * shape_[static_cast<std::size_t>(d + 1)];
}

double& Tensor::at(std::span<const Index> idx) {
    if (static_cast<Index>(idx.size()) != rank()) fail("index rank mismatch");
    Index flat = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
        if (idx[d] < 0 || idx[d] >= shape_[d]) fail("index out of bounds");
        flat += idx[d] * strides_[d];
    }
    return data_[static_cast<std::size_t>(flat)];
}

double Tensor::at(std::span<const Index> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

double Tensor::item() const {
    if (data_.size() != 1) fail("item() requires a single-element tensor");
    return data_[0];
}

// ---------------------------------------------------------------------------
// contract

namespace {

struct ContractPlan {
    std::vector<std::string> inputs;  // per-operand label strings
    std::string output;
};

ContractPlan parse_spec(std::string_view spec, std::size_t n_operands) {
    auto arrow = spec.find("->");
    if (arrow == std::string_view::npos) fail("contraction spec needs '->'");
    std::string_view lhs = spec.substr(0, arrow);
    std::string_view rhs = spec.substr(arrow + 2);

    ContractPlan plan;
    std::string current;
    for (char c : lhs) {
        if (c == ',') {
            plan.inputs.push_back(current);
            current.clear();
        } else if (std::isalpha(static_cast<unsigned char>(c))) {
            current.push_back(c);
        } else {
            fail(std::string("invalid character in spec: '") + c + "'");
        }
    }
    plan.inputs.push_back(current);
    for (char c : rhs) {
        if (!std::isalpha(static_cast<unsigned char>(c))) fail(std::string("invalid character in spec: '") + c + "'");
        plan.output.push_back(c);
    }
    if (plan.inputs.size() != n_operands) fail("operand count does not match spec");
    for (std::size_t i = 0; i < plan.output.size(); ++i)
        for (std::size_t j = i + 1; j < plan.output.size(); ++j)
            if (plan.output[i] == plan.output[j]) fail("repeated label in output");
    return plan;
}

}  // namespace

Tensor contract(std::string_view spec, std::span<const Tensor> operands) {
    if (operands.empty()) fail("contract needs at least one operand");
    ContractPlan plan = parse_spec(spec, operands.size());

    // Label extents; repeated labels (within or across operands) must agree.
    std::vector<char> labels;
    std::vector<Index> extents;
    auto extent_slot = [&](char c) -> Index {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) return static_cast<Index>(i);
        return -1;
    };
    for (std::size_t op = 0; op < operands.size(); ++op) {
        const std::string& in = plan.inputs[op];
        if (static_cast<Index>(in.size()) != operands[op].rank()) fail("operand rank does not match spec");
        for (std::size_t d = 0; d < in.size(); ++d) {
            Index ext = operands[op].shape()[d];
            Index slot = extent_slot(in[d]);
            if (slot < 0) {
                labels.push_back(in[d]);
                extents.push_back(ext);
            } else if (extents[static_cast<std::size_t>(slot)] != ext) {
                fail(std::string("extent mismatch on label '") + in[d] + "'");
            }
        }
    }
    for (char c : plan.output)
        if (extent_slot(c) < 0) fail(std::string("output label '") + c + "' absent from inputs");

    // Loop order: output labels first (row-major over the output), then summed
    // labels by first appearance; the last summed label varies fastest.
    std::vector<char> order(plan.output.begin(), plan.output.end());
    for (char c : labels) {
        bool in_out = false;
        for (char o : plan.output)
            if (o == c) in_out = true;
        if (!in_out) order.push_back(c);
    }
    const std::size_t n_out = plan.output.size();
    const std::size_t n_sum = order.size() - n_out;

    std::vector<Index> dims(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        dims[i] = extents[static_cast<std::size_t>(extent_slot(order[i]))];

    // Per-operand stride along each loop slot (strides of repeated labels add,
    // which walks the diagonal).
    std::vector<std::vector<Index>> slot_stride(operands.size(), std::vector<Index>(order.size(), 0));
    for (std::size_t op = 0; op < operands.size(); ++op) {
        const std::string& in = plan.inputs[op];
        for (std::size_t d = 0; d < in.size(); ++d) {
            for (std::size_t s = 0; s < order.size(); ++s)
                if (order[s] == in[d]) slot_stride[op][s] += operands[op].strides()[d];
        }
    }

    Shape out_shape(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(n_out));
    Tensor out(out_shape);
    if (out.size() == 0) return out;

    Index sum_count = 1;
    for (std::size_t s = n_out; s < dims.size(); ++s) sum_count *= dims[s];
    if (sum_count == 0) return out;  // summing over an empty range leaves zeros

    std::vector<Index> idx(order.size(), 0);
    std::vector<Index> offset(operands.size(), 0);
    for (Index flat = 0; flat < out.size(); ++flat) {
        double acc = 0.0;
        bool more = true;
        while (more) {
            double term = 1.0;
            for (std::size_t op = 0; op < operands.size(); ++op)
                term *= operands[op].data()[offset[op]];
            acc += term;
            if (n_sum == 0) break;
            // advance the summed odometer, last slot fastest
            more = false;
            std::size_t s = idx.size();
            while (s > n_out) {
                --s;
                ++idx[s];
                for (std::size_t op = 0; op < operands.size(); ++op) offset[op] += slot_stride[op][s];
                if (idx[s] < dims[s]) {
                    more = true;
                    break;
                }
                for (std::size_t op = 0; op < operands.size(); ++op) offset[op] -= idx[s] * slot_stride[op][s];
                idx[s] = 0;
            }
        }
        out[flat] = acc;
        // advance the output odometer, last slot fastest
        std::size_t s = n_out;
        while (s > 0) {
            --s;
            ++idx[s];
            for (std::size_t op = 0; op < operands.size(); ++op) offset[op] += slot_stride[op][s];
            if (idx[s] < dims[s]) break;
            for (std::size_t op = 0; op < operands.size(); ++op) offset[op] -= idx[s] * slot_stride[op][s];
            idx[s] = 0;
        }
    }
    return out;
}

Tensor contract(std::string_view spec, const Tensor& a) {
    const Tensor ops[] = {a};
    return contract(spec, std::span<const Tensor>(ops, 1));
}

Tensor contract(std::string_view spec, const Tensor& a, const Tensor& b) {
    const Tensor ops[] = {a, b};
    return contract(spec, std::span<const Tensor>(ops, 2));
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t ra = a.size(), rb = b.size();
    const std::size_t r = std::max(ra, rb);
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        Index ea = i < r - ra ? 1 : a[i - (r - ra)];
        Index eb = i < r - rb ? 1 : b[i - (r - rb)];
        if (ea != eb && ea != 1 && eb != 1) fail("shapes not broadcast-compatible");
        out[i] = ea == 1 ? eb : ea;
    }
    return out;
}

template <typename F>
Tensor binary_op(const Tensor& a, const Tensor& b, F f) {
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.data();
        for (Index i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor out(os);
    const std::size_t r = os.size();
    // strides with 0 on broadcast axes
    auto bstrides = [&](const Tensor& t) {
        std::vector<Index> s(r, 0);
        const std::size_t rt = t.shape().size();
        for (std::size_t i = 0; i < rt; ++i)
            if (t.shape()[i] != 1) s[r - rt + i] = t.strides()[i];
        return s;
    };
    std::vector<Index> sa = bstrides(a), sb = bstrides(b);
    std::vector<Index> idx(r, 0);
    Index oa = 0, ob = 0;
    for (Index flat = 0; flat < out.size(); ++flat) {
        out[flat] = f(a.data()[oa], b.data()[ob]);
        std::size_t d = r;
        while (d > 0) {
            --d;
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < os[d]) break;
            oa -= idx[d] * sa[d];
            ob -= idx[d] * sb[d];
            idx[d] = 0;
        }
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x * y; });
}

Tensor square(const Tensor& a) {
    Tensor out(a.shape());
    for (Index i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    for (Index i = 0; i < a.size(); ++i) out[i] = a[i] * c;
    return out;
}

// ---------------------------------------------------------------------------
// reductions

namespace {

enum class ReduceOp { Sum, Mean, Sqnorm };

Tensor reduce_impl(const Tensor& a, std::span<const Index> axes, ReduceOp op) {
    const std::size_t r = static_cast<std::size_t>(a.rank());
    std::vector<bool> reduced(r, false);
    for (Index ax : axes) {
        if (ax < 0 || ax >= a.rank()) fail("reduction axis out of range");
        if (reduced[static_cast<std::size_t>(ax)]) fail("duplicate reduction axis");
        reduced[static_cast<std::size_t>(ax)] = true;
    }

    Shape out_shape;
    std::vector<Index> keep_strides, red_dims, red_strides;
    Index red_count = 1;
    for (std::size_t d = 0; d < r; ++d) {
        if (reduced[d]) {
            red_dims.push_back(a.shape()[d]);
            red_strides.push_back(a.strides()[d]);
            red_count *= a.shape()[d];
        } else {
            out_shape.push_back(a.shape()[d]);
            keep_strides.push_back(a.strides()[d]);
        }
    }
    if (op == ReduceOp::Mean && red_count * shape_product(out_shape) == 0)
        fail("mean reduction over an empty tensor");

    Tensor out(out_shape);
    if (out.size() == 0) return out;

    std::vector<Index> kidx(out_shape.size(), 0), ridx(red_dims.size(), 0);
    Index kbase = 0;
    for (Index flat = 0; flat < out.size(); ++flat) {
        double acc = 0.0;
        Index off = kbase;
        for (std::size_t s = 0; s < ridx.size(); ++s) ridx[s] = 0;
        for (Index n = 0; n < red_count; ++n) {
            double v = a.data()[off];
            acc += op == ReduceOp::Sqnorm ? v * v : v;
            // advance reduced odometer, last axis fastest
            std::size_t s = ridx.size();
            while (s > 0) {
                --s;
                ++ridx[s];
                off += red_strides[s];
                if (ridx[s] < red_dims[s]) break;
                off -= ridx[s] * red_strides[s];
                ridx[s] = 0;
            }
        }
        out[flat] = op == ReduceOp::Mean ? acc / static_cast<double>(red_count) : acc;
        std::size_t s = kidx.size();
        while (s > 0) {
            --s;
            ++kidx[s];
            kbase += keep_strides[s];
            if (kidx[s] < out_shape[s]) break;
            kbase -= kidx[s] * keep_strides[s];
            kidx[s] = 0;
        }
    }
    return out;
}

std::vector<Index> all_axes(const Tensor& a) {
    std::vector<Index> axes(static_cast<std::size_t>(a.rank()));
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<Index>(i);
    return axes;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, std::span<const Index> axes) {
    return reduce_impl(a, axes, ReduceOp::Sum);
}

Tensor reduce_mean(const Tensor& a, std::span<const Index> axes) {
    return reduce_impl(a, axes, ReduceOp::Mean);
}

Tensor reduce_sqnorm(const Tensor& a, std::span<const Index> axes) {
    return reduce_impl(a, axes, ReduceOp::Sqnorm);
}

double sum_all(const Tensor& a) {
    auto axes = all_axes(a);
    return reduce_impl(a, axes, ReduceOp::Sum).item();
}

double mean_all(const Tensor& a) {
    auto axes = all_axes(a);
    return reduce_impl(a, axes, ReduceOp::Mean).item();
}

double sqnorm_all(const Tensor& a) {
    auto axes = all_axes(a);
    return reduce_impl(a, axes, ReduceOp::Sqnorm).item();
}

}  // namespace gnstk
