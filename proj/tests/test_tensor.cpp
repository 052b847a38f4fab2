#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssldetect/ops.hpp"
#include "ssldetect/tape.hpp"
#include "test_support.hpp"

using namespace ssldetect;
using namespace ssldetect::testing;
namespace op = ssldetect::ops;

TEST_CASE("conv2d identity 1x1 kernel") {
    Rng rng(1);
    Tensor x = random_tensor({1, 1, 5, 5}, rng);
    Tensor w = Tensor::from_values({1, 1, 1, 1}, {1.0f});
    Tensor out = op::conv2d(x, w, Tensor(), 1, 0);
    REQUIRE(out.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones 3x3 on constant input") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor out = op::conv2d(x, w, Tensor(), 1, 0);
    CHECK(out.shape() == std::vector<int>{1, 1, 2, 2});
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d strided shape law") {
    Rng rng(2);
    Tensor x = random_tensor({1, 3, 8, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor out = op::conv2d(x, w, Tensor(), 2, 1);
    CHECK(out.shape() == std::vector<int>{1, 4, 4, 4});
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor x = Tensor::zeros({1, 3, 8, 8});
    Tensor w = Tensor::zeros({4, 2, 3, 3});
    CHECK_THROWS_AS(op::conv2d(x, w, Tensor(), 1, 0), ContractError);
}

TEST_CASE("conv2d linearity in the input") {
    Rng rng(3);
    Tensor a = random_tensor({2, 3, 6, 6}, rng);
    Tensor b = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor sum_in = op::add(a, b);
    Tensor lhs = op::conv2d(sum_in, w, Tensor(), 1, 1);
    Tensor c1 = op::conv2d(a, w, Tensor(), 1, 1);
    Tensor c2 = op::conv2d(b, w, Tensor(), 1, 1);
    Tensor rhs = op::add(c1, c2);
    for (int64_t i = 0; i < lhs.numel(); ++i) {
        CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-5));
    }
}

TEST_CASE("forward determinism") {
    Rng rng(4);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor w = random_tensor({8, 3, 3, 3}, rng);
    Tensor o1 = op::conv2d(x, w, Tensor(), 2, 1);
    Tensor o2 = op::conv2d(x, w, Tensor(), 2, 1);
    for (int64_t i = 0; i < o1.numel(); ++i) CHECK(o1.data()[i] == o2.data()[i]);
}

TEST_CASE("batch_norm normalizes per channel in train mode") {
    Rng rng(5);
    Tensor x = random_tensor({4, 3, 6, 6}, rng);
    Tensor gamma = Tensor::full({3}, 1.0f);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0f);
    Tensor out = op::batch_norm(x, gamma, beta, rm, rv, true);
    int plane = 36, n = 4, c = 3;
    for (int ci = 0; ci < c; ++ci) {
        double s = 0, sq = 0;
        for (int ni = 0; ni < n; ++ni) {
            const float* p = out.data() + (ni * c + ci) * plane;
            for (int i = 0; i < plane; ++i) {
                s += p[i];
                sq += p[i] * p[i];
            }
        }
        double mean = s / (n * plane);
        double var = sq / (n * plane) - mean * mean;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("batch_norm constant channel collapses to beta") {
    Tensor x = Tensor::full({2, 1, 4, 4}, 3.7f);
    Tensor gamma = Tensor::full({1}, 1.5f);
    Tensor beta = Tensor::full({1}, 0.25f);
    Tensor rm = Tensor::zeros({1});
    Tensor rv = Tensor::full({1}, 1.0f);
    Tensor out = op::batch_norm(x, gamma, beta, rm, rv, true);
    for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(0.25f).epsilon(1e-4));
    }
}

TEST_CASE("batch_norm eval mode uses running stats") {
    Tensor x = Tensor::full({1, 1, 1, 2}, 3.0f);
    Tensor gamma = Tensor::full({1}, 2.0f);
    Tensor beta = Tensor::full({1}, 1.0f);
    Tensor rm = Tensor::zeros({1});
    Tensor rv = Tensor::full({1}, 1.0f);
    Tensor out = op::batch_norm(x, gamma, beta, rm, rv, false, 0.1f, 0.0f);
    CHECK(out.data()[0] == doctest::Approx(7.0f));
}

TEST_CASE("silu values") {
    Tensor x = Tensor::from_values({3}, {0.0f, 1.0f, 30.0f});
    Tensor y = op::silu(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == doctest::Approx(0.731059).epsilon(1e-5));
    CHECK(y.data()[2] == doctest::Approx(30.0f).epsilon(1e-6));
}

TEST_CASE("global_avg_pool mean and constant plane") {
    Tensor x = Tensor::from_values({1, 2, 2, 2},
                                   {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 5.0f, 5.0f, 5.0f});
    Tensor y = op::global_avg_pool(x);
    CHECK(y.shape() == std::vector<int>{1, 2});
    CHECK(y.data()[0] == doctest::Approx(2.5f));
    CHECK(y.data()[1] == doctest::Approx(5.0f));
}

TEST_CASE("linear dot product and identity") {
    Tensor x = Tensor::from_values({1, 2}, {2.0f, 3.0f});
    Tensor w = Tensor::from_values({1, 2}, {1.0f, 1.0f});
    Tensor b = Tensor::zeros({1});
    Tensor y = op::linear(x, w, b);
    CHECK(y.shape() == std::vector<int>{1, 1});
    CHECK(y.data()[0] == doctest::Approx(5.0f));

    Tensor eye = Tensor::from_values({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tensor y2 = op::linear(x, eye, Tensor());
    CHECK(y2.data()[0] == 2.0f);
    CHECK(y2.data()[1] == 3.0f);
}

TEST_CASE("linear shape checks") {
    Tensor x = Tensor::zeros({2, 3});
    Tensor w = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(op::linear(x, w, Tensor()), ContractError);
}

TEST_CASE("l2_normalize rows") {
    Tensor x = Tensor::from_values({1, 2}, {3.0f, 4.0f});
    Tensor y = op::l2_normalize_rows(x);
    CHECK(y.data()[0] == doctest::Approx(0.6f));
    CHECK(y.data()[1] == doctest::Approx(0.8f));

    // scale invariance
    Tensor xs = Tensor::from_values({1, 2}, {30.0f, 40.0f});
    Tensor ys = op::l2_normalize_rows(xs);
    CHECK(ys.data()[0] == doctest::Approx(y.data()[0]).epsilon(1e-6));
    CHECK(ys.data()[1] == doctest::Approx(y.data()[1]).epsilon(1e-6));
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
    Rng rng(7);
    Tensor x = random_tensor({3, 4}, rng);
    {
        Tape::Scope scope;
        Tensor probe = x.clone();
        probe.set_requires_grad(true);
        Tensor loss = op::sum(probe);
        backward(loss);
        for (int64_t i = 0; i < probe.numel(); ++i) CHECK(probe.grad()[i] == 1.0f);
    }
    {
        Tape::Scope scope;
        Tensor probe = x.clone();
        probe.set_requires_grad(true);
        Tensor loss = op::sum(op::mul(probe, probe));
        backward(loss);
        for (int64_t i = 0; i < probe.numel(); ++i) {
            CHECK(probe.grad()[i] == doctest::Approx(2.0f * probe.data()[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape::Scope scope;
    Tensor x = Tensor::zeros({2, 2}, true);
    Tensor y = op::mul(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("grads accumulate across multiple uses") {
    Tape::Scope scope;
    Tensor x = Tensor::from_values({1}, {2.0f});
    x.set_requires_grad(true);
    Tensor y = op::add(x, x); // dy/dx = 2
    Tensor loss = op::sum(y);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("no grad allocation without requires_grad") {
    Tape::Scope scope;
    Tensor x = Tensor::zeros({2, 2});
    Tensor w = Tensor::zeros({2, 2}, true);
    Tensor y = op::linear(x, w, Tensor());
    Tensor loss = op::sum(y);
    backward(loss);
    CHECK(!x.has_grad());
    CHECK(w.has_grad());
}

TEST_CASE("gradient checks: every differentiable kernel") {
    Rng rng(42);
    const double tol = 1e-3;

    SUBCASE("conv2d w.r.t. input, weight, bias") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor x = random_tensor({2, 2, 5, 5}, rng);
            Tensor w = random_tensor({3, 2, 3, 3}, rng);
            Tensor b = random_tensor({3}, rng);
            int stride = 1 + trial % 2;
            auto via_x = [&](Tensor& p) { return op::mean(op::silu(op::conv2d(p, w, b, stride, 1))); };
            CHECK(grad_check(via_x, x) < tol);
            auto via_w = [&](Tensor& p) { return op::mean(op::silu(op::conv2d(x, p, b, stride, 1))); };
            CHECK(grad_check(via_w, w) < tol);
            auto via_b = [&](Tensor& p) { return op::mean(op::silu(op::conv2d(x, w, p, stride, 1))); };
            CHECK(grad_check(via_b, b) < tol);
        }
    }

    SUBCASE("batch_norm train and eval") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor x = random_tensor({3, 2, 4, 4}, rng);
            Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
            Tensor beta = random_tensor({2}, rng);
            bool train = trial % 2 == 0;
            auto f = [&](Tensor& p) {
                Tensor rm = Tensor::zeros({2});
                Tensor rv = Tensor::full({2}, 1.0f);
                return op::mean(op::silu(op::batch_norm(p, gamma, beta, rm, rv, train)));
            };
            CHECK(grad_check(f, x) < tol);
            auto fg = [&](Tensor& p) {
                Tensor rm = Tensor::zeros({2});
                Tensor rv = Tensor::full({2}, 1.0f);
                return op::mean(op::silu(op::batch_norm(x, p, beta, rm, rv, train)));
            };
            CHECK(grad_check(fg, gamma) < tol);
        }
    }

    SUBCASE("activations and pooling") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor x = random_tensor({2, 3, 4, 4}, rng);
            auto f_silu = [&](Tensor& p) { return op::mean(op::silu(p)); };
            CHECK(grad_check(f_silu, x) < tol);
            auto f_pool = [&](Tensor& p) {
                return op::mean(op::mul(op::global_avg_pool(p), op::global_avg_pool(p)));
            };
            CHECK(grad_check(f_pool, x) < tol);
            auto f_sig = [&](Tensor& p) { return op::mean(op::sigmoid(p)); };
            CHECK(grad_check(f_sig, x) < tol);
        }
    }

    SUBCASE("linear and l2_normalize") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor x = random_tensor({3, 4}, rng);
            Tensor w = random_tensor({2, 4}, rng);
            Tensor b = random_tensor({2}, rng);
            auto f = [&](Tensor& p) { return op::mean(op::silu(op::linear(p, w, b))); };
            CHECK(grad_check(f, x) < tol);
            auto fw = [&](Tensor& p) { return op::mean(op::silu(op::linear(x, p, b))); };
            CHECK(grad_check(fw, w) < tol);
            // sum of squares of unit rows is constant; probe asymmetrically
            Tensor probe_w = random_tensor({3, 4}, rng);
            auto fn2 = [&](Tensor& p) {
                return op::mean(op::mul(op::l2_normalize_rows(p), probe_w));
            };
            CHECK(grad_check(fn2, x) < tol);
        }
    }

    SUBCASE("structural ops") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor x = random_tensor({2, 3, 2, 2}, rng);
            Tensor probe = random_tensor({2, 3, 4, 4}, rng);
            auto f_up = [&](Tensor& p) { return op::mean(op::mul(op::upsample_nearest2x(p), probe)); };
            CHECK(grad_check(f_up, x) < tol);

            Tensor other = random_tensor({2, 2, 2, 2}, rng);
            Tensor probe2 = random_tensor({2, 5, 2, 2}, rng);
            auto f_cat = [&](Tensor& p) {
                return op::mean(op::mul(op::concat_channels(p, other), probe2));
            };
            CHECK(grad_check(f_cat, x) < tol);

            Tensor probe3 = random_tensor({8, 3}, rng);
            auto f_rows = [&](Tensor& p) { return op::mean(op::mul(op::cells_to_rows(p), probe3)); };
            CHECK(grad_check(f_rows, x) < tol);

            Tensor mat = random_tensor({5, 3}, rng);
            std::vector<int> idx = {0, 2, 2, 4};
            Tensor probe4 = random_tensor({4, 3}, rng);
            auto f_gather = [&](Tensor& p) {
                return op::mean(op::mul(op::gather_rows(p, idx), probe4));
            };
            CHECK(grad_check(f_gather, mat) < tol);
        }
    }

    SUBCASE("elementwise and losses") {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor a = random_tensor({6}, rng);
            Tensor b = random_tensor({6}, rng, 0.5, 1.5);
            auto f_div = [&](Tensor& p) { return op::mean(op::divide(p, b)); };
            CHECK(grad_check(f_div, a) < tol);
            auto f_div_b = [&](Tensor& p) { return op::mean(op::divide(a, p)); };
            CHECK(grad_check(f_div_b, b) < tol);
            Tensor pmin = random_tensor({6}, rng);
            Tensor pmax = random_tensor({6}, rng);
            auto f_minmax = [&](Tensor& p) {
                return op::mean(op::add(op::mul(op::minimum(p, b), pmin),
                                        op::mul(op::maximum(p, b), pmax)));
            };
            CHECK(grad_check(f_minmax, a) < tol);
            auto f_atan = [&](Tensor& p) { return op::mean(op::atan_of(p)); };
            CHECK(grad_check(f_atan, a) < tol);

            Tensor targets = random_tensor({6}, rng, 0.0, 1.0);
            auto f_bce = [&](Tensor& p) { return op::mean(op::bce_with_logits(p, targets)); };
            CHECK(grad_check(f_bce, a) < tol);

            Tensor logits = random_tensor({3, 8}, rng, -2.0, 2.0);
            Tensor probe5 = random_tensor({3}, rng);
            auto f_exp = [&](Tensor& p) { return op::mean(op::mul(op::bin_expectation(p), probe5)); };
            CHECK(grad_check(f_exp, logits) < tol);

            std::vector<float> tgts = {0.0f, 3.5f, 7.0f};
            auto f_dfl = [&](Tensor& p) { return op::mean(op::dfl_loss_rows(p, tgts)); };
            CHECK(grad_check(f_dfl, logits) < tol);
        }
    }
}

TEST_CASE("dfl loss analytic cases") {
    // uniform softmax over 16 bins, integer target -> ln 16
    Tensor logits = Tensor::zeros({1, 16});
    Tensor loss = op::dfl_loss_rows(logits, {5.0f});
    CHECK(loss.data()[0] == doctest::Approx(std::log(16.0)).epsilon(1e-6));

    // equal mass on the two bracketing bins, half-integer target -> ln 2
    std::vector<float> vals(16, -30.0f);
    vals[4] = 0.0f;
    vals[5] = 0.0f;
    Tensor logits2 = Tensor::from_values({1, 16}, vals);
    Tensor loss2 = op::dfl_loss_rows(logits2, {4.5f});
    CHECK(loss2.data()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-5));

    // all mass on the true bin -> loss ~ 0
    std::vector<float> vals3(16, -30.0f);
    vals3[9] = 30.0f;
    Tensor logits3 = Tensor::from_values({1, 16}, vals3);
    Tensor loss3 = op::dfl_loss_rows(logits3, {9.0f});
    CHECK(loss3.data()[0] == doctest::Approx(0.0).epsilon(1e-6));

    // top bin as integer target is exact, not zero
    Tensor logits4 = Tensor::zeros({1, 16});
    Tensor loss4 = op::dfl_loss_rows(logits4, {15.0f});
    CHECK(loss4.data()[0] == doctest::Approx(std::log(16.0)).epsilon(1e-6));

    CHECK_THROWS_AS(op::dfl_loss_rows(logits, {16.5f}), ContractError);
}

TEST_CASE("bin_expectation shift invariance") {
    Rng rng(11);
    Tensor logits = random_tensor({4, 16}, rng);
    Tensor shifted = op::add_scalar(logits, 3.25f);
    Tensor e1 = op::bin_expectation(logits);
    Tensor e2 = op::bin_expectation(shifted);
    for (int i = 0; i < 4; ++i) CHECK(e1.data()[i] == doctest::Approx(e2.data()[i]).epsilon(1e-5));
}
