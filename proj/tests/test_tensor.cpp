#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tftl/tensor.hpp"

using namespace tftl;

namespace {

std::vector<double> run_forward_backward(std::uint64_t seed) {
    RngStream init(seed);
    Tensor w = Tensor::random_uniform({3, 3}, -1.0, 1.0, init, true);
    Tensor x = Tensor::random_uniform({2, 3}, -1.0, 1.0, init);
    Tape tape;
    TapeScope scope(tape);
    RngStream drop(seed, "drop");
    Tensor y = dropout(tanh(matmul(x, w)), 0.3, drop, true);
    Tensor loss = sum(mul(y, y));
    tape.backward(loss);
    std::vector<double> out = loss.values();
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
}

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), Error);
    CHECK_THROWS_AS(Tensor::from({0}, {}), Error);
    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("matmul identity") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor y = matmul(a, eye);
    CHECK(y.values() == a.values());
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), Error);
}

TEST_CASE("softmax of a constant row is uniform") {
    Tensor x = Tensor::from({3}, {0, 0, 0});
    Tensor y = softmax(x);
    for (int i = 0; i < 3; ++i) {
        CHECK(y.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("masked softmax zeroes invalid entries and rejects empty rows") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    std::vector<std::uint8_t> valid = {1, 1, 0, 1, 0, 0};
    Tensor y = softmax_masked(x, valid);
    CHECK(y.at(0, 2) == 0.0);
    CHECK(y.at(0, 0) + y.at(0, 1) == doctest::Approx(1.0));
    CHECK(y.at(1, 0) == doctest::Approx(1.0));
    std::vector<std::uint8_t> empty_row = {0, 0, 0, 1, 1, 1};
    CHECK_THROWS_AS(softmax_masked(x, empty_row), Error);
}

TEST_CASE("dropout with rate zero is the identity tensor") {
    RngStream rng(7);
    Tensor x = Tensor::from({4}, {1, 2, 3, 4});
    Tensor y = dropout(x, 0.0, rng, true);
    CHECK(y.node_id() == x.node_id());
    Tensor z = dropout(x, 0.5, rng, false);
    CHECK(z.node_id() == x.node_id());
}

TEST_CASE("dropout keeps the expected fraction and preserves the mean") {
    const int n = 200000;
    const double rate = 0.3;
    RngStream rng(123, "dropout-prop");
    Tensor x = Tensor::constant({n}, 1.0);
    Tensor y = dropout(x, rate, rng, true);
    int kept = 0;
    double total = 0.0;
    for (double v : y.values()) {
        kept += v != 0.0 ? 1 : 0;
        total += v;
    }
    const double kept_frac = static_cast<double>(kept) / n;
    const double sigma = std::sqrt(rate * (1.0 - rate) / n);
    CHECK(std::abs(kept_frac - (1.0 - rate)) < 3.0 * sigma);
    // Inverted scaling keeps E[output] == input.
    CHECK(total / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("backward computes analytic gradients on simple graphs") {
    SUBCASE("sum of squares") {
        Tensor x = Tensor::from({1}, {3.0}, true);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum(mul(x, x));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(6.0));
    }
    SUBCASE("sigmoid at zero") {
        Tensor x = Tensor::from({1}, {0.0}, true);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum(sigmoid(x));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(0.25));
    }
    SUBCASE("backward on a non-scalar is rejected") {
        Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
        Tape tape;
        TapeScope scope(tape);
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), Error);
    }
    SUBCASE("a parameter used twice accumulates additively") {
        Tensor x = Tensor::from({1}, {2.0}, true);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum(add(mul(x, x), mul(x, x)));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(8.0));
    }
}

TEST_CASE("every primitive passes the finite-difference oracle") {
    RngStream rng(42, "gradcheck-prims");
    auto check = [&](const char* name, auto build, std::vector<Tensor> params) {
        for (Tensor& p : params) {
            p.grad_mut().clear();
        }
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor loss = build();
            tape.backward(loss);
        }
        auto report = tftl::test::check_gradients([&]() { return build().item(); }, params);
        const std::string msg = std::string(name) + ": worst rel err " +
                                std::to_string(report.worst_rel_err) + " at " +
                                report.worst_location;
        CAPTURE(msg);
        CHECK(report.failed == 0);
    };

    for (int rep = 0; rep < 3; ++rep) {
        Tensor a = Tensor::random_uniform({3, 4}, -1.0, 1.0, rng, true);
        Tensor b = Tensor::random_uniform({4, 5}, -1.0, 1.0, rng, true);
        check("matmul", [&]() { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b});

        Tensor c = Tensor::random_uniform({2, 3, 4}, -1.0, 1.0, rng, true);
        Tensor w = Tensor::random_uniform({4, 3}, -1.0, 1.0, rng, true);
        check("matmul3", [&]() { return sum(tanh(matmul3(c, w))); }, {c, w});

        Tensor d = Tensor::random_uniform({2, 3, 4}, -1.0, 1.0, rng, true);
        Tensor e = Tensor::random_uniform({2, 4, 2}, -1.0, 1.0, rng, true);
        check("bmm", [&]() { return sum(mul(bmm(d, e), bmm(d, e))); }, {d, e});

        Tensor f = Tensor::random_uniform({2, 3, 4}, -1.0, 1.0, rng, true);
        Tensor g = Tensor::random_uniform({2, 5, 4}, -1.0, 1.0, rng, true);
        check("bmm_nt", [&]() { return sum(sigmoid(bmm_nt(f, g))); }, {f, g});

        Tensor u = Tensor::random_uniform({3, 4}, -1.0, 1.0, rng, true);
        Tensor v = Tensor::random_uniform({3, 4}, -1.0, 1.0, rng, true);
        check("add/sub/mul", [&]() { return sum(mul(add(u, v), sub(u, v))); }, {u, v});
        check("maximum", [&]() { return sum(maximum(u, v)); }, {u, v});

        Tensor rv = Tensor::random_uniform({4}, -1.0, 1.0, rng, true);
        check("add_rowvec", [&]() { return sum(elu(add_rowvec(u, rv))); }, {u, rv});
        check("scale", [&]() { return sum(scale(u, 1.7)); }, {u});
        check("sigmoid/tanh/elu", [&]() { return sum(elu(tanh(sigmoid(u)))); }, {u});
        check("softmax", [&]() { return sum(mul(softmax(u), v)); }, {u});

        std::vector<std::uint8_t> valid = {1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0};
        check("softmax_masked",
              [&]() { return sum(mul(softmax_masked(u, valid), v)); }, {u});

        check("concat/slice",
              [&]() {
                  Tensor cat = concat({u, v}, 1);
                  return sum(mul(slice(cat, 1, 2, 4), slice(cat, 1, 1, 4)));
              },
              {u, v});
        check("transpose", [&]() { return sum(mul(transpose(u), transpose(v))); }, {u, v});

        Tensor gn = Tensor::random_uniform({4}, 0.5, 1.5, rng, true);
        Tensor bn = Tensor::random_uniform({4}, -0.5, 0.5, rng, true);
        check("layer_norm", [&]() { return sum(mul(layer_norm(u, gn, bn), v)); }, {u, gn, bn});

        check("mean", [&]() { return mean(mul(u, u)); }, {u});

        Tensor xe = Tensor::random_uniform({3, 5}, -1.0, 1.0, rng, true);
        Tensor we = Tensor::random_uniform({5, 4}, -1.0, 1.0, rng, true);
        Tensor be = Tensor::random_uniform({5, 4}, -1.0, 1.0, rng, true);
        check("channel_embed",
              [&]() { return sum(tanh(channel_embed(xe, we, be))); }, {xe, we, be});

        Tensor flat = Tensor::random_uniform({3, 20}, -1.0, 1.0, rng, true);
        Tensor sel = Tensor::random_uniform({3, 5}, 0.0, 1.0, rng, true);
        check("varsel_combine",
              [&]() { return sum(mul(varsel_combine(flat, sel, 4), varsel_combine(flat, sel, 4))); },
              {flat, sel});

        Tensor s0 = Tensor::random_uniform({2, 3}, -1.0, 1.0, rng, true);
        Tensor s1 = Tensor::random_uniform({2, 3}, -1.0, 1.0, rng, true);
        check("stack_steps", [&]() { return sum(tanh(stack_steps({s0, s1}))); }, {s0, s1});

        Tensor pq = Tensor::random_uniform({2, 3, 4}, -1.0, 1.0, rng, true);
        std::vector<double> target = {0.3, -0.2, 0.9, 0.1, -0.6, 0.4};
        std::vector<std::uint8_t> lm = {1, 1, 0, 1, 1, 1};
        std::vector<double> qs = {0.1, 0.5, 0.9, 0.98};
        check("pinball_loss", [&]() { return pinball_loss(pq, target, lm, qs); }, {pq});

        Tensor pm = Tensor::random_uniform({2, 3}, -1.0, 1.0, rng, true);
        check("mae_loss", [&]() { return mae_loss(pm, target, lm); }, {pm});
    }
}

TEST_CASE("dropout gradient matches finite differences with a replayed stream") {
    RngStream init(5, "dropout-grad");
    Tensor x = Tensor::random_uniform({4, 4}, -1.0, 1.0, init, true);
    auto forward = [&]() {
        RngStream rng(99, "mask");
        return sum(mul(dropout(x, 0.4, rng, true), dropout(x, 0.4, rng, true)));
    };
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = forward();
        tape.backward(loss);
    }
    auto report = tftl::test::check_gradients([&]() { return forward().item(); }, {x});
    CHECK(report.failed == 0);
}

TEST_CASE("identical seeds reproduce bit-identical forward values and gradients") {
    const std::vector<double> a = run_forward_backward(2024);
    const std::vector<double> b = run_forward_backward(2024);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("ops outside a tape scope record nothing") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(active_tape() == nullptr);
}
