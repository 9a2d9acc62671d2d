#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "conseg/autodiff.hpp"
#include "conseg/params.hpp"
#include "fd_check.hpp"

using namespace conseg;
using ad::Tape;
using ad::Tensor;

TEST_CASE("matmul examples") {
    Tape t;
    SUBCASE("identity") {
        Tensor i2 = t.constant({2, 2}, {1, 0, 0, 1});
        Tensor a = t.constant({2, 2}, {1, 2, 3, 4});
        Tensor y = t.matmul(i2, a);
        CHECK(y.value() == std::vector<double>{1, 2, 3, 4});
    }
    SUBCASE("selection") {
        Tensor a = t.constant({1, 2}, {1, 0});
        Tensor b = t.constant({2, 1}, {0, 5});
        CHECK(t.matmul(a, b).value() == std::vector<double>{0});
    }
    SUBCASE("hand product") {
        Tensor a = t.constant({2, 2}, {1, 2, 3, 4});
        Tensor b = t.constant({2, 2}, {5, 6, 7, 8});
        CHECK(t.matmul(a, b).value() == std::vector<double>{19, 22, 43, 50});
    }
    SUBCASE("shape mismatch") {
        Tensor a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
        Tensor b = t.constant({2, 2}, {1, 2, 3, 4});
        CHECK_THROWS_AS((void)t.matmul(a, b), DimensionError);
    }
}

TEST_CASE("softmax rows") {
    Tape t;
    SUBCASE("symmetry") {
        Tensor y = t.softmax_rows(t.constant({1, 2}, {0, 0}));
        CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("stabilized under large inputs") {
        Tensor y = t.softmax_rows(t.constant({1, 2}, {1000, 1000}));
        CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::isfinite(y.value()[1]));
    }
    SUBCASE("closed form") {
        Tensor y = t.softmax_rows(t.constant({1, 2}, {0.0, std::log(3.0)}));
        CHECK(y.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(y.value()[1] == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("rows sum to one and are shift invariant") {
        Rng rng(7);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> x(12), shifted(12);
            for (int r = 0; r < 3; ++r) {
                double c = rng.uniform(-5, 5);
                for (int j = 0; j < 4; ++j) {
                    x[r * 4 + j] = rng.uniform(-3, 3);
                    shifted[r * 4 + j] = x[r * 4 + j] + c;
                }
            }
            Tensor a = t.softmax_rows(t.constant({3, 4}, x));
            Tensor b = t.softmax_rows(t.constant({3, 4}, shifted));
            for (int r = 0; r < 3; ++r) {
                double sum = 0;
                for (int j = 0; j < 4; ++j) sum += a.value()[r * 4 + j];
                CHECK(std::abs(sum - 1.0) < 1e-12);
            }
            for (int i = 0; i < 12; ++i)
                CHECK(std::abs(a.value()[i] - b.value()[i]) < 1e-12);
        }
    }
}

TEST_CASE("elementwise ops") {
    Tape t;
    SUBCASE("tanh at zero has unit gradient") {
        ad::ParameterStore store;
        ad::Parameter& x = store.create("x", {1});
        x.value[0] = 0.0;
        Tape tape;
        Tensor y = tape.tanh(tape.param(x));
        CHECK(y.scalar() == 0.0);
        tape.backward(y);
        CHECK(x.grad[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("exp(0)=1") { CHECK(t.exp(t.scalar_const(0.0)).scalar() == 1.0); }
    SUBCASE("concat last dim") {
        Tensor a = t.constant({2}, {1, 2});
        Tensor b = t.constant({1}, {3});
        CHECK(t.concat_last_dim({a, b}).value() == std::vector<double>{1, 2, 3});
    }
    SUBCASE("log domain error") {
        CHECK_THROWS_AS((void)t.log(t.scalar_const(0.0)), NumericError);
        CHECK_THROWS_AS((void)t.log(t.scalar_const(-1.0)), NumericError);
    }
    SUBCASE("broadcast add over leading dim") {
        Tensor a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
        Tensor b = t.constant({3}, {10, 20, 30});
        CHECK(t.add(a, b).value() == std::vector<double>{11, 22, 33, 14, 25, 36});
        Tensor bad = t.constant({2}, {1, 2});
        CHECK_THROWS_AS((void)t.add(a, bad), DimensionError);
    }
}

TEST_CASE("cross entropy examples") {
    Tape t;
    SUBCASE("perfect prediction") {
        Tensor p = t.constant({1, 2}, {1, 0});
        double loss = t.cross_entropy(p, {1, 0}).scalar();
        CHECK(std::abs(loss) <= 1e-9);
    }
    SUBCASE("uniform binary") {
        Tensor p = t.constant({1, 2}, {0.5, 0.5});
        CHECK(t.cross_entropy(p, {1, 0}).scalar() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("closed form") {
        Tensor p = t.constant({1, 2}, {0.25, 0.75});
        CHECK(t.cross_entropy(p, {0, 1}).scalar() ==
              doctest::Approx(-std::log(0.75)).epsilon(1e-9));
    }
    SUBCASE("shape mismatch") {
        Tensor p = t.constant({1, 2}, {0.5, 0.5});
        CHECK_THROWS_AS((void)t.cross_entropy(p, {1, 0, 0}), DimensionError);
    }
}

TEST_CASE("mse examples") {
    Tape t;
    CHECK(t.mse(t.constant({2}, {3, 4}), t.constant({2}, {3, 4})).scalar() == 0.0);
    CHECK(t.mse(t.constant({2}, {0, 0}), t.constant({2}, {1, 1})).scalar() == 1.0);
    CHECK(t.mse(t.constant({2}, {1, 2}), t.constant({2}, {3, 5})).scalar() ==
          doctest::Approx(6.5).epsilon(1e-15));
    CHECK_THROWS_AS((void)t.mse(t.constant({2}, {1, 2}), t.constant({3}, {1, 2, 3})),
                    DimensionError);
}

TEST_CASE("backward basics") {
    SUBCASE("power rule") {
        ad::ParameterStore store;
        ad::Parameter& x = store.create("x", {1});
        x.value[0] = 3.0;
        Tape tape;
        Tensor xx = tape.param(x);
        Tensor y = tape.mul(xx, xx);
        tape.backward(y);
        CHECK(x.grad[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("non-scalar loss rejected") {
        Tape tape;
        Tensor v = tape.constant({2}, {1, 2});
        CHECK_THROWS_AS(tape.backward(v), ContractError);
    }
    SUBCASE("softmax cross-entropy composite matches finite differences") {
        ad::ParameterStore store;
        Rng rng(11);
        ad::Parameter& w = store.create_normal("w", {2, 2}, rng, 1.0);
        std::vector<double> targets = {1, 0, 0, 1};
        auto forward = [&]() {
            Tape tape;
            Tensor logits = tape.param(w);
            return tape.cross_entropy(tape.softmax_rows(logits), targets).scalar();
        };
        auto backward = [&]() {
            Tape tape;
            Tensor logits = tape.param(w);
            Tensor loss = tape.cross_entropy(tape.softmax_rows(logits), targets);
            tape.backward(loss);
            return loss.scalar();
        };
        auto rep = testutil::fd_check(store, forward, backward);
        CHECK(rep.max_rel_err < 1e-6);
    }
    SUBCASE("linearity: grad of summed losses equals sum of grads") {
        ad::ParameterStore store;
        Rng rng(5);
        ad::Parameter& w = store.create_normal("w", {3}, rng, 1.0);
        std::vector<double> g_sum, g_a, g_b;
        {
            store.zero_grad();
            Tape tape;
            Tensor x = tape.param(w);
            Tensor a = tape.mean_all(tape.mul(x, x));
            Tensor b = tape.mean_all(tape.tanh(x));
            tape.backward(tape.add(a, b));
            g_sum = w.grad;
        }
        {
            store.zero_grad();
            Tape tape;
            Tensor x = tape.param(w);
            tape.backward(tape.mean_all(tape.mul(x, x)));
            g_a = w.grad;
        }
        {
            store.zero_grad();
            Tape tape;
            Tensor x = tape.param(w);
            tape.backward(tape.mean_all(tape.tanh(x)));
            g_b = w.grad;
        }
        for (size_t i = 0; i < g_sum.size(); ++i)
            CHECK(std::abs(g_sum[i] - (g_a[i] + g_b[i])) < 1e-12);
    }
    SUBCASE("unused parameters keep zero gradients") {
        ad::ParameterStore store;
        Rng rng(3);
        ad::Parameter& used = store.create_normal("used", {2}, rng, 1.0);
        ad::Parameter& unused = store.create_normal("unused", {2}, rng, 1.0);
        store.zero_grad();
        Tape tape;
        tape.backward(tape.mean_all(tape.param(used)));
        CHECK(unused.grad == std::vector<double>{0.0, 0.0});
    }
}

TEST_CASE("random small networks match finite differences") {
    Rng seed_rng(123);
    for (int rep = 0; rep < 4; ++rep) {
        ad::ParameterStore store;
        Rng rng(seed_rng.next_u64());
        ad::Parameter& w1 = store.create_normal("w1", {3, 4}, rng, 0.7);
        ad::Parameter& b1 = store.create_normal("b1", {4}, rng, 0.2);
        ad::Parameter& w2 = store.create_normal("w2", {4, 2}, rng, 0.7);
        ad::Parameter& sg = store.create_normal("sg", {3}, rng, 0.3);
        std::vector<double> input = {0.3, -1.2, 0.8, 0.1, 0.5, -0.4, 1.1, -0.2, 0.6};
        std::vector<double> target = {1, 0, 0, 1, 0.5, 0.5};
        auto build = [&](Tape& tape) {
            Tensor x = tape.constant({3, 3}, input);
            Tensor h = tape.gelu(tape.add(tape.matmul(x, tape.param(w1)), tape.param(b1)));
            Tensor p = tape.softmax_rows(tape.matmul(h, tape.param(w2)));
            Tensor sigma = tape.add_scalar(tape.softplus(tape.param(sg)), 0.1);
            Tensor g = tape.gaussian_rows(sigma, 3);
            Tensor mixed = tape.matmul(g, p);
            Tensor ce = tape.cross_entropy(mixed, target);
            Tensor reg = tape.mse(tape.param(w2), tape.zeros({4, 2}));
            return tape.add(ce, reg);
        };
        auto forward = [&]() {
            Tape tape;
            return build(tape).scalar();
        };
        auto backward = [&]() {
            Tape tape;
            Tensor loss = build(tape);
            tape.backward(loss);
            return loss.scalar();
        };
        auto rep_out = testutil::fd_check(store, forward, backward);
        INFO("worst coordinate: ", rep_out.worst);
        CHECK(rep_out.max_rel_err < 1e-4);
    }
}

TEST_CASE("optimizer") {
    SUBCASE("zero gradient leaves parameter unchanged") {
        ad::ParameterStore store;
        ad::Parameter& p = store.create("p", {1});
        p.value[0] = 2.5;
        ad::Optimizer opt({0.1, 0.9, 0.999, 1e-8, 0.0});
        store.zero_grad();
        opt.step(store.all());
        CHECK(p.value[0] == 2.5);
    }
    SUBCASE("first step is approximately -lr * sign(grad)") {
        ad::ParameterStore store;
        ad::Parameter& p = store.create("p", {1});
        p.value[0] = 0.0;
        p.grad[0] = 1.0;
        ad::Optimizer opt({0.1, 0.9, 0.999, 1e-8, 0.0});
        opt.step(store.all());
        CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-6));
    }
    SUBCASE("descent on a parabola") {
        ad::ParameterStore store;
        ad::Parameter& p = store.create("p", {1});
        p.value[0] = 1.0;
        ad::Optimizer opt({0.1, 0.9, 0.999, 1e-8, 0.0});
        for (int i = 0; i < 500; ++i) {
            store.zero_grad();
            Tape tape;
            Tensor x = tape.param(p);
            tape.backward(tape.mul(x, x));
            opt.step(store.all());
            if (std::abs(p.value[0]) < 1e-3) break;
        }
        CHECK(std::abs(p.value[0]) < 1e-3);
    }
    SUBCASE("non-finite gradient names the parameter") {
        ad::ParameterStore store;
        ad::Parameter& p = store.create("theta", {1});
        p.grad[0] = std::nan("");
        ad::Optimizer opt({0.1, 0.9, 0.999, 1e-8, 0.0});
        try {
            opt.step(store.all());
            FAIL("expected TrainingError");
        } catch (const TrainingError& e) {
            CHECK(std::string(e.what()).find("theta") != std::string::npos);
        }
    }
    SUBCASE("step counter increments") {
        ad::ParameterStore store;
        store.create("p", {1});
        ad::Optimizer opt({});
        opt.step(store.all());
        opt.step(store.all());
        CHECK(opt.step_count() == 2);
    }
}

TEST_CASE("identical seeds give bit-identical trajectories") {
    auto run = [](uint64_t seed) {
        ad::ParameterStore store;
        Rng rng(seed);
        ad::Parameter& w = store.create_normal("w", {4, 4}, rng, 0.5);
        ad::Optimizer opt({1e-2, 0.9, 0.999, 1e-8, 1e-4});
        std::vector<double> trace;
        for (int i = 0; i < 20; ++i) {
            store.zero_grad();
            Tape tape;
            Tensor x = tape.param(w);
            Tensor noise = tape.constant({4, 4}, [&] {
                std::vector<double> v(16);
                for (auto& e : v) e = rng.normal();
                return v;
            }());
            tape.backward(tape.mse(tape.tanh(x), noise));
            opt.step(store.all());
            trace.insert(trace.end(), w.value.begin(), w.value.end());
        }
        return trace;
    };
    auto a = run(42), b = run(42), c = run(43);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("checkpoint round trip is bit exact") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "conseg_ckpt_test";
    fs::create_directories(dir);
    std::string path = (dir / "model.ckpt").string();

    ad::ParameterStore store;
    Rng rng(99);
    store.create_normal("a/w", {3, 5}, rng, 1.0);
    store.create_normal("b/v", {7}, rng, 0.01);
    store.save(path, R"({"epoch":3,"config_hash":"abc"})");

    ad::ParameterStore other;
    other.create("a/w", {3, 5});
    other.create("b/v", {7});
    std::string manifest = other.load(path);
    CHECK(manifest == R"({"epoch":3,"config_hash":"abc"})");
    CHECK(other.at("a/w").value == store.at("a/w").value);
    CHECK(other.at("b/v").value == store.at("b/v").value);

    ad::ParameterStore wrong;
    wrong.create("a/w", {5, 3});
    wrong.create("b/v", {7});
    CHECK_THROWS_AS((void)wrong.load(path), ContractError);
    fs::remove_all(dir);
}

TEST_CASE("gaussian rows contract") {
    Tape t;
    Tensor bad = t.constant({2}, {1.0, 0.0});
    CHECK_THROWS_AS((void)t.gaussian_rows(bad, 2), ContractError);
}

TEST_CASE("dropout") {
    std::vector<double> x(1000, 2.0);
    SUBCASE("rate zero is the identity") {
        Tape t;
        Rng rng(1);
        Tensor y = t.dropout(t.constant({1000}, x), 0.0, rng);
        CHECK(y.value() == x);
    }
    SUBCASE("inverted mask keeps the expectation and is seed-deterministic") {
        auto run = [&](uint64_t seed) {
            Tape t;
            Rng rng(seed);
            return t.dropout(t.constant({1000}, x), 0.5, rng).value();
        };
        auto a = run(7), b = run(7);
        CHECK(a == b);
        int kept = 0;
        double sum = 0.0;
        for (double v : a) {
            CHECK((v == 0.0 || v == 4.0));  // 2.0 / (1 - 0.5)
            if (v != 0.0) ++kept;
            sum += v;
        }
        CHECK(kept > 400);
        CHECK(kept < 600);
        CHECK(sum / 1000.0 == doctest::Approx(2.0).epsilon(0.15));
    }
    SUBCASE("bad rate is a config error") {
        Tape t;
        Rng rng(1);
        CHECK_THROWS_AS((void)t.dropout(t.constant({4}, {1, 2, 3, 4}), 1.0, rng), ConfigError);
    }
}
