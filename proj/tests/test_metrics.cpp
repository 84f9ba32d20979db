#include <cmath>

#include "doctest.h"
#include "tftl/metrics.hpp"
#include "tftl/rng.hpp"

using namespace tftl;

TEST_CASE("point metrics") {
    SUBCASE("perfect prediction") {
        const std::vector<double> y = {1.0, 2.0, 3.0};
        CHECK(mae(y, y) == 0.0);
        CHECK(rmse(y, y) == 0.0);
        CHECK(r_squared(y, y) == doctest::Approx(1.0));
    }
    SUBCASE("constant mean prediction has zero R^2") {
        const std::vector<double> truth = {0.0, 1.0, 2.0};
        const std::vector<double> pred = {1.0, 1.0, 1.0};
        CHECK(r_squared(pred, truth) == doctest::Approx(0.0));
    }
    SUBCASE("anti-correlated binary case, hand-computed") {
        const std::vector<double> truth = {0.0, 1.0};
        const std::vector<double> pred = {1.0, 0.0};
        CHECK(mae(pred, truth) == doctest::Approx(1.0));
        CHECK(rmse(pred, truth) == doctest::Approx(1.0));
        CHECK(r_squared(pred, truth) == doctest::Approx(-3.0));
    }
    SUBCASE("all-masked input is a contract error") {
        CHECK_THROWS_AS(mae({1.0}, {1.0}, {0}), Error);
        CHECK_THROWS_AS(r_squared({1.0}, {1.0}, {0}), Error);
    }
    SUBCASE("zero-variance truth reports an undefined sentinel") {
        bool defined = true;
        const double r2 = r_squared({1.0, 2.0}, {3.0, 3.0}, {}, &defined);
        CHECK_FALSE(defined);
        CHECK(std::isnan(r2));
    }
    SUBCASE("rmse dominates mae on random inputs") {
        RngStream rng(5, "jensen");
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> pred(20);
            std::vector<double> truth(20);
            for (int i = 0; i < 20; ++i) {
                pred[static_cast<std::size_t>(i)] = rng.normal(0.0, 2.0);
                truth[static_cast<std::size_t>(i)] = rng.normal(0.0, 2.0);
            }
            CHECK(rmse(pred, truth) >= mae(pred, truth));
        }
    }
    SUBCASE("masked entries are ignored") {
        CHECK(mae({1.0, 100.0}, {1.0, 0.0}, {1, 0}) == 0.0);
    }
}

TEST_CASE("transfer robustness index") {
    SUBCASE("published table rows reproduce within 1 percent") {
        struct Row {
            double mae;
            double published_tri;
        };
        const double source_val_mae = 15.745;
        const std::vector<Row> rows = {
            {15.037, 1.05},  {0.0068, 2323.0}, {0.0145, 1085.0}, {0.0051, 3097.0},
            {0.0170, 928.0}, {0.404, 38.9},    {0.399, 39.4},    {0.163, 96.8},
            {0.053, 299.0},
        };
        for (const Row& row : rows) {
            const double tri = compute_tri(source_val_mae, row.mae);
            CHECK(std::abs(tri - row.published_tri) / row.published_tri < 0.01);
        }
    }
    SUBCASE("identity and epsilon floor") {
        CHECK(compute_tri(1.0, 1.0) == doctest::Approx(1.0));
        CHECK(compute_tri(2.5, 0.0) == doctest::Approx(2.5e8));
    }
    SUBCASE("negative inputs are rejected") {
        CHECK_THROWS_AS(compute_tri(-1.0, 1.0), Error);
        CHECK_THROWS_AS(compute_tri(1.0, -1.0), Error);
    }
    SUBCASE("monotone in both arguments") {
        RngStream rng(17, "tri-mono");
        for (int rep = 0; rep < 100; ++rep) {
            const double src = rng.uniform(0.1, 20.0);
            const double tgt = rng.uniform(0.01, 20.0);
            const double bump = rng.uniform(0.01, 1.0);
            CHECK(compute_tri(src, tgt + bump) < compute_tri(src, tgt));
            CHECK(compute_tri(src + bump, tgt) > compute_tri(src, tgt));
        }
    }
    SUBCASE("ranking is invariant to common rescaling away from the epsilon floor") {
        const double src = 12.0;
        const double a = 0.4;
        const double b = 0.9;
        for (double scale : {0.5, 2.0, 10.0}) {
            CHECK((compute_tri(src, a) > compute_tri(src, b)) ==
                  (compute_tri(src, a * scale) > compute_tri(src, b * scale)));
        }
    }
}

TEST_CASE("build_table") {
    SUBCASE("baselines carry no TRI, transfer rows do") {
        std::vector<TableRow> rows = {
            {"Persistence", 0.0044, 0.0352, -0.862, true, false},
            {"DirectTransfer", 15.037, 15.038, -364644.0, true, true},
        };
        const std::string csv = build_table(rows, 15.745);
        CHECK(csv.find("model,mae,rmse,r_squared,tri") == 0);
        CHECK(csv.find("Persistence,0.0044,0.0352,-0.862,--") != std::string::npos);
        CHECK(csv.find("DirectTransfer,15.037,15.038,-364644,1.04708") != std::string::npos);
    }
    SUBCASE("empty record set yields only the header") {
        CHECK(build_table({}, 1.0) == "model,mae,rmse,r_squared,tri\n");
    }
    SUBCASE("undefined R^2 prints as nan") {
        std::vector<TableRow> rows = {{"LSTM", 0.1, 0.2, 0.0, false, false}};
        CHECK(build_table(rows, 1.0).find("LSTM,0.1,0.2,nan,--") != std::string::npos);
    }
}
