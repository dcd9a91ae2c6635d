#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "gnstk/costmodel.hpp"
#include "support/counting_oracle.hpp"

using namespace gnstk;
using gnstk::testing::count_frobenius;
using gnstk::testing::count_simultaneous;

TEST_SUITE("costmodel") {
    TEST_CASE("worked FLOP examples") {
        CostShape s{2, 2, 3, 4};
        const CostPair sim = flops(s, CostMethod::Simultaneous);
        CHECK(sim.weight_grad == 84);
        CHECK(sim.grad_norms == 46);
        const CostPair frob = flops(s, CostMethod::Frobenius);
        CHECK(frob.weight_grad == 84);
        CHECK(frob.grad_norms == 104);

        CostShape unit{1, 1, 1, 1};
        CHECK(flops(unit, CostMethod::Simultaneous).weight_grad == 1);
    }

    TEST_CASE("worked I/O examples") {
        CostShape unit{1, 1, 1, 1};
        const CostPair sim = io_values(unit, CostMethod::Simultaneous);
        CHECK(sim.weight_grad == 3);
        CHECK(sim.grad_norms == 2);
        const CostPair frob = io_values(unit, CostMethod::Frobenius);
        CHECK(frob.weight_grad == 3);
        CHECK(frob.grad_norms == 3);

        CHECK(io_bytes(unit, CostMethod::Simultaneous).weight_grad == 12);
    }

    TEST_CASE("doubling B doubles every B-linear I/O term") {
        CostShape s{3, 5, 7, 2};
        CostShape s2 = s;
        s2.b *= 2;
        // frobenius weight-grad io has the B-independent KL term
        const CostPair a = io_values(s, CostMethod::Simultaneous);
        const CostPair b = io_values(s2, CostMethod::Simultaneous);
        CHECK(b.weight_grad == 2 * a.weight_grad);
        CHECK(b.grad_norms == 2 * a.grad_norms);
        const CostPair fa = io_values(s, CostMethod::Frobenius);
        const CostPair fb = io_values(s2, CostMethod::Frobenius);
        CHECK(fb.grad_norms == 2 * fa.grad_norms);
        CHECK(fb.weight_grad - s.k * s.l == 2 * (fa.weight_grad - s.k * s.l));
    }

    TEST_CASE("crossover points") {
        CHECK(crossover_t(1024, 1024, CostCriterion::IO) == doctest::Approx(724.0773).epsilon(1e-5));
        CHECK(crossover_t(1024, 1024, CostCriterion::FLOPS) == doctest::Approx(22.6304).epsilon(1e-4));
        CHECK(crossover_t(1, 1, CostCriterion::IO) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    }

    TEST_CASE("io crossover is the sign flip of the norm-phase difference") {
        for (auto [k, l] : {std::pair<std::int64_t, std::int64_t>{64, 64}, {128, 32}, {256, 256}}) {
            const double tc = crossover_t(k, l, CostCriterion::IO);
            // continuous relaxation: difference vanishes at tc
            const double diff_at_tc = static_cast<double>(k * l) - 2.0 * tc * tc;
            CHECK(std::abs(diff_at_tc) < 1.0);
            const auto below = static_cast<std::int64_t>(std::floor(tc));
            const auto above = static_cast<std::int64_t>(std::ceil(tc)) + 1;
            CostShape sb{1, below, k, l};
            CostShape sa{1, above, k, l};
            CHECK(io_values(sb, CostMethod::Simultaneous).grad_norms > io_values(sb, CostMethod::Frobenius).grad_norms);
            CHECK(io_values(sa, CostMethod::Simultaneous).grad_norms < io_values(sa, CostMethod::Frobenius).grad_norms);
        }
    }

    TEST_CASE("total io favors simultaneous above the crossover at B=1") {
        const std::int64_t k = 96, l = 48;
        const auto t = static_cast<std::int64_t>(std::ceil(crossover_t(k, l, CostCriterion::IO))) + 1;
        CostShape s{1, t, k, l};
        const CostPair sim = io_values(s, CostMethod::Simultaneous);
        const CostPair frob = io_values(s, CostMethod::Frobenius);
        CHECK(sim.weight_grad + sim.grad_norms < frob.weight_grad + frob.grad_norms);
    }

    TEST_CASE("sweep: simultaneous norm flops are independent of T") {
        CostShape a{4, 128, 64, 32};
        CostShape b{4, 4096, 64, 32};
        CHECK(flops(a, CostMethod::Simultaneous).grad_norms == flops(b, CostMethod::Simultaneous).grad_norms);
        const std::vector<CostShape> shapes = {a, b};
        const auto rows = sweep(shapes);
        CHECK(rows.size() == 4);
        CHECK(rows[0].flops_norms == rows[2].flops_norms);
        CHECK(rows[1].ratio_vs_frobenius == 1.0);
    }

    TEST_CASE("frobenius norm flops grow quadratically in T") {
        CostShape a{2, 37, 24, 8};
        CostShape b = a;
        b.t *= 2;
        CHECK(flops(b, CostMethod::Frobenius).grad_norms == 4 * flops(a, CostMethod::Frobenius).grad_norms);
    }

    TEST_CASE("instrumented counting oracle reproduces the closed forms exactly") {
        for (std::int64_t b = 1; b <= 4; ++b)
            for (std::int64_t t = 1; t <= 4; ++t)
                for (std::int64_t k = 1; k <= 4; ++k)
                    for (std::int64_t l = 1; l <= 4; ++l) {
                        CostShape s{b, t, k, l};
                        const auto sim = count_simultaneous(s);
                        const CostPair sf = flops(s, CostMethod::Simultaneous);
                        const CostPair sio = io_values(s, CostMethod::Simultaneous);
                        CHECK(sim.weight_grad.flops == sf.weight_grad);
                        CHECK(sim.grad_norms.flops == sf.grad_norms);
                        CHECK(sim.weight_grad.io == sio.weight_grad);
                        CHECK(sim.grad_norms.io == sio.grad_norms);

                        const auto frob = count_frobenius(s);
                        const CostPair ff = flops(s, CostMethod::Frobenius);
                        const CostPair fio = io_values(s, CostMethod::Frobenius);
                        CHECK(frob.weight_grad.flops == ff.weight_grad);
                        CHECK(frob.grad_norms.flops == ff.grad_norms);
                        CHECK(frob.weight_grad.io == fio.weight_grad);
                        CHECK(frob.grad_norms.io == fio.grad_norms);
                    }
    }

    TEST_CASE("layernorm norm io stays far below both linear-layer methods") {
        CostShape s{8, 512, 1024, 1024};
        const std::int64_t ln = layernorm_norms_io_values(s);
        CHECK(ln == 8 * 1024 + 8);
        CHECK(ln < io_values(s, CostMethod::Simultaneous).grad_norms / 100);
        CHECK(ln < io_values(s, CostMethod::Frobenius).grad_norms / 100);
    }

    TEST_CASE("integer outputs and validation") {
        CHECK_THROWS_AS(flops(CostShape{0, 1, 1, 1}, CostMethod::Simultaneous), std::invalid_argument);
        CHECK_THROWS_AS(crossover_t(0, 4, CostCriterion::IO), std::invalid_argument);
        CHECK_THROWS_AS(sweep({}), std::invalid_argument);
    }
}
