#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conseg/metrics.hpp"
#include "conseg/rng.hpp"

using namespace conseg;
using namespace conseg::metrics;

namespace {

// per-class counting oracle independent of the confusion-matrix path
double f1_oracle(const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == cls && truth[i] == cls) ++tp;
        if (pred[i] == cls && truth[i] != cls) ++fp;
        if (pred[i] != cls && truth[i] == cls) ++fn;
    }
    double denom = 2.0 * tp + fp + fn;
    return denom > 0 ? 2.0 * tp / denom : 0.0;
}

}  // namespace

TEST_CASE("classification metrics") {
    SUBCASE("perfect prediction") {
        auto rep = classification_metrics({0, 1, 1, 0}, {0, 1, 1, 0}, 2);
        CHECK(rep.accuracy == 1.0);
        CHECK(rep.macro_f1 == 1.0);
    }
    SUBCASE("binary all wrong") {
        auto rep = classification_metrics({1, 0}, {0, 1}, 2);
        CHECK(rep.accuracy == 0.0);
        CHECK(rep.per_class_f1 == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("hand confusion matrix") {
        auto rep = classification_metrics({1, 0, 1, 1}, {1, 1, 1, 0}, 2);
        CHECK(rep.per_class_f1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(rep.per_class_f1[0] == 0.0);
        CHECK(rep.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("empty input is a contract error") {
        CHECK_THROWS_AS((void)classification_metrics({}, {}, 2), ContractError);
    }
    SUBCASE("agrees with a per-pair counting oracle on random vectors") {
        Rng rng(7);
        for (int rep = 0; rep < 30; ++rep) {
            int n = 1 + static_cast<int>(rng.uniform_int(0, 49));
            int classes = 2 + static_cast<int>(rng.uniform_int(0, 2));
            std::vector<int> pred(static_cast<size_t>(n)), truth(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                pred[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, classes - 1));
                truth[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, classes - 1));
            }
            auto got = classification_metrics(pred, truth, classes);
            double macro = 0.0;
            for (int c = 0; c < classes; ++c) {
                double f1 = f1_oracle(pred, truth, c);
                CHECK(got.per_class_f1[static_cast<size_t>(c)] == doctest::Approx(f1).epsilon(1e-12));
                macro += f1;
            }
            CHECK(got.macro_f1 == doctest::Approx(macro / classes).epsilon(1e-12));
        }
    }
    SUBCASE("macro F1 is invariant under joint class relabeling") {
        Rng rng(9);
        std::vector<int> perm = {2, 0, 1};
        for (int rep = 0; rep < 20; ++rep) {
            int n = 20;
            std::vector<int> pred(static_cast<size_t>(n)), truth(static_cast<size_t>(n)), pp(static_cast<size_t>(n)), tt(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                pred[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, 2));
                truth[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, 2));
                pp[static_cast<size_t>(i)] = perm[static_cast<size_t>(pred[static_cast<size_t>(i)])];
                tt[static_cast<size_t>(i)] = perm[static_cast<size_t>(truth[static_cast<size_t>(i)])];
            }
            CHECK(classification_metrics(pred, truth, 3).macro_f1 ==
                  doctest::Approx(classification_metrics(pp, tt, 3).macro_f1).epsilon(1e-12));
        }
    }
}

TEST_CASE("change points") {
    CHECK(change_points({1, 1, 1}).empty());
    CHECK(change_points({0, 0, 1, 1}) == std::vector<int>{2});
    CHECK(change_points({0, 1, 0}) == std::vector<int>{1, 2});
    CHECK_THROWS_AS((void)change_points({}), ContractError);
}

TEST_CASE("change point score") {
    SUBCASE("identical change sets score 1") {
        CHECK(c_score({0, 0, 1, 1, 0}, {0, 0, 1, 1, 0}, 2) == 1.0);
    }
    SUBCASE("constant prediction against real changes scores 0") {
        CHECK(c_score({0, 0, 0, 0}, {0, 1, 1, 0}, 2) == 0.0);
    }
    SUBCASE("both constant scores 1") {
        CHECK(c_score({1, 1, 1}, {1, 1, 1}, 2) == 1.0);
    }
    SUBCASE("hand-matched case: precision 1, recall one half") {
        double s = c_score_sets({5}, {4, 20}, 2);
        CHECK(s == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("symmetric under swapping prediction and truth") {
        Rng rng(13);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<int> a, b;
            int pos = 0;
            for (int i = 0; i < 6; ++i) {
                pos += 1 + static_cast<int>(rng.uniform_int(0, 9));
                if (rng.uniform() < 0.7) a.push_back(pos);
            }
            pos = 0;
            for (int i = 0; i < 6; ++i) {
                pos += 1 + static_cast<int>(rng.uniform_int(0, 9));
                if (rng.uniform() < 0.7) b.push_back(pos);
            }
            int tol = static_cast<int>(rng.uniform_int(0, 4));
            CHECK(c_score_sets(a, b, tol) == doctest::Approx(c_score_sets(b, a, tol)).epsilon(1e-12));
        }
    }
}

TEST_CASE("label recovery") {
    SUBCASE("full recovery") {
        auto st = label_recovery({0, 1, 0}, {1, 0, 0}, {0, 1, 0});
        CHECK(st.recovery == 1.0);
        CHECK(st.corruption == 0.0);
    }
    SUBCASE("no harmonization keeps recovery at zero") {
        auto st = label_recovery({1, 0, 0}, {1, 0, 0}, {0, 1, 0});
        CHECK(st.recovery == 0.0);
    }
    SUBCASE("counting") {
        // 10 disturbed, 6 restored
        std::vector<int> clean(20, 0), disturbed(20, 0), harmonized(20, 0);
        for (int i = 0; i < 10; ++i) disturbed[static_cast<size_t>(i)] = 1;
        for (int i = 0; i < 6; ++i) harmonized[static_cast<size_t>(i)] = 0;
        for (int i = 6; i < 10; ++i) harmonized[static_cast<size_t>(i)] = 1;
        auto st = label_recovery(harmonized, disturbed, clean);
        CHECK(st.disturbed == 10);
        CHECK(st.restored == 6);
        CHECK(st.recovery == doctest::Approx(0.6).epsilon(1e-12));
    }
}

TEST_CASE("mutual information gain") {
    SUBCASE("deterministic uniform binary y = x") {
        JointTable j(2, 2, 2);
        for (int y = 0; y < 2; ++y)
            for (int a = 0; a < 2; ++a) j.at(y, y, a) = 0.25;
        MiResult r = mi_gain(j);
        CHECK(r.i_y_x == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::abs(r.gain) < 1e-9);
    }
    SUBCASE("independent x with context equal to y recovers the entropy") {
        JointTable j(2, 3, 2);
        double py[2] = {0.3, 0.7};
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x) j.at(y, x, y) = py[y] / 3.0;
        MiResult r = mi_gain(j);
        double hy = -(0.3 * std::log2(0.3) + 0.7 * std::log2(0.7));
        CHECK(std::abs(r.i_y_x) < 1e-9);
        CHECK(r.gain == doctest::Approx(hy).epsilon(1e-9));
    }
    SUBCASE("fully independent triple has no information anywhere") {
        JointTable j(2, 2, 2);
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                for (int a = 0; a < 2; ++a) j.at(y, x, a) = 0.125;
        MiResult r = mi_gain(j);
        CHECK(std::abs(r.i_y_x) < 1e-12);
        CHECK(std::abs(r.i_y_x_ctx) < 1e-12);
        CHECK(std::abs(r.gain) < 1e-12);
    }
    SUBCASE("gain is never negative on random joints") {
        Rng rng(17);
        for (int rep = 0; rep < 100; ++rep) {
            JointTable j(2, 3, 2);
            double sum = 0.0;
            for (double& v : j.p) {
                v = rng.uniform(0.0, 1.0);
                sum += v;
            }
            for (double& v : j.p) v /= sum;
            // renormalize exactly enough for validate()
            double s2 = 0.0;
            for (double v : j.p) s2 += v;
            j.p[0] += 1.0 - s2;
            CHECK(mi_gain(j).gain >= -1e-12);
        }
    }
    SUBCASE("invalid tables are rejected") {
        JointTable j(2, 2, 2);
        CHECK_THROWS_AS((void)mi_gain(j), ContractError);  // sums to zero
        j.p.assign(8, 0.125);
        j.p[0] = -0.125;
        j.p[1] = 0.375;
        CHECK_THROWS_AS((void)mi_gain(j), ContractError);  // negative entry
    }
}
