#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cdkit/errors.hpp"
#include "cdkit/metrics.hpp"
#include "oracles.hpp"

using namespace cdkit;
using namespace cdkit::tensor;
using doctest::Approx;

namespace {
grid::ChangeMask random_mask(std::mt19937_64& rng, int h, int w, double p = 0.5) {
  auto m = grid::ChangeMask::zeros(h, w);
  for (auto& v : m.values) v = (rng() % 1000) < p * 1000 ? 1 : 0;
  return m;
}
}  // namespace

TEST_CASE("weighted bce hand values") {
  metrics::LossConfig cfg;  // fg_weight 9

  SUBCASE("single background pixel at P=0.5") {
    auto loss = metrics::weighted_bce(constant({1}, {0.5}), constant({1}, {0.0}), cfg);
    CHECK(loss->values[0] == Approx(-std::log(0.5)).epsilon(1e-9));  // 0.693147...
  }
  SUBCASE("single foreground pixel at P=0.5 is weighted 9x") {
    auto loss = metrics::weighted_bce(constant({1}, {0.5}), constant({1}, {1.0}), cfg);
    CHECK(loss->values[0] == Approx(-9.0 * std::log(0.5)).epsilon(1e-9));  // 6.238324...
  }
  SUBCASE("exact prediction is pinned near zero by the clamp") {
    auto P = constant({2}, {1.0, 0.0});
    auto T = constant({2}, {1.0, 0.0});
    CHECK(metrics::weighted_bce(P, T, cfg)->values[0] < 1e-5);
  }
  SUBCASE("mean over pixels, foreground weighting applied per pixel") {
    // two pixels: fg at 0.5 and bg at 0.5 -> (9*log2 + log2)/2
    auto loss = metrics::weighted_bce(constant({2}, {0.5, 0.5}), constant({2}, {1.0, 0.0}), cfg);
    CHECK(loss->values[0] == Approx(-5.0 * std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("weight 1 reduces to plain BCE") {
    metrics::LossConfig plain = cfg;
    plain.fg_weight = 1.0;
    std::mt19937_64 rng(12);
    std::vector<double> pv(20), gv(20);
    for (auto& v : pv) v = 0.02 + 0.96 * double(rng() % 1000) / 1000.0;
    for (auto& v : gv) v = double(rng() % 2);
    double got =
        metrics::weighted_bce(constant({20}, pv), constant({20}, gv), plain)->values[0];
    double ref = 0.0;  // textbook BCE, summed by hand
    for (int i = 0; i < 20; ++i)
      ref -= gv[i] * std::log(pv[i]) + (1.0 - gv[i]) * std::log(1.0 - pv[i]);
    ref /= 20.0;
    CHECK(got == Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("dice loss hand values") {
  metrics::LossConfig cfg;  // eps 1e-6

  auto ones = [](int n) { return constant({n}, 1.0); };
  auto zeros = [](int n) { return constant({n}, 0.0); };

  CHECK(metrics::dice_loss(ones(7), ones(7), cfg)->values[0] == Approx(0.0).epsilon(1e-12));
  CHECK(metrics::dice_loss(zeros(5), zeros(5), cfg)->values[0] == Approx(0.0).epsilon(1e-12));

  SUBCASE("total miss on 100 pixels") {
    double expect = 1.0 - cfg.dice_eps / (100.0 + cfg.dice_eps);
    CHECK(metrics::dice_loss(ones(100), zeros(100), cfg)->values[0] ==
          Approx(expect).epsilon(1e-12));
  }
  SUBCASE("dice stays inside [0,1] on random probability maps") {
    std::mt19937_64 rng(88);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> p(32), g(32);
      for (auto& v : p) v = double(rng() % 1001) / 1000.0;
      for (auto& v : g) v = double(rng() % 2);
      double d = metrics::dice_loss(constant({32}, p), constant({32}, g), cfg)->values[0];
      REQUIRE(d >= 0.0);
      REQUIRE(d <= 1.0);
    }
  }
}

TEST_CASE("cd loss adds its two terms and descends") {
  metrics::LossConfig cfg;
  std::mt19937_64 rng(3);

  SUBCASE("additivity") {
    std::vector<double> pv(9), gv(9);
    for (auto& v : pv) v = 0.1 + 0.8 * double(rng() % 1000) / 1000.0;
    for (auto& v : gv) v = double(rng() % 2);
    auto P = constant({9}, pv);
    auto T = constant({9}, gv);
    double total = metrics::cd_loss(P, T, cfg)->values[0];
    double parts = metrics::weighted_bce(P, T, cfg)->values[0] +
                   metrics::dice_loss(P, T, cfg)->values[0];
    CHECK(total == Approx(parts).epsilon(1e-12));
  }

  SUBCASE("gradient matches finite differences") {
    const int n = 16;  // a 4x4 map
    std::vector<double> pv(n), gv(n);
    for (auto& v : pv) v = 0.15 + 0.7 * double(rng() % 1000) / 1000.0;
    for (auto& v : gv) v = double(rng() % 2);
    auto T = constant({n}, gv);

    auto logits = leaf({n}, pv);  // differentiate through the sigmoid too
    auto loss_of = [&] { return metrics::cd_loss(sigmoid(logits), T, cfg); };
    backward(loss_of());
    auto grad = logits->grad;
    double step = 1e-5;
    for (int i = 0; i < n; ++i) {
      double keep = logits->values[i];
      logits->values[i] = keep + step;
      double up = loss_of()->values[0];
      logits->values[i] = keep - step;
      double dn = loss_of()->values[0];
      logits->values[i] = keep;
      double fd = (up - dn) / (2 * step);
      double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-8});
      REQUIRE(std::fabs(fd - grad[i]) / denom < 1e-4);
    }
  }

  SUBCASE("twenty plain gradient steps strictly reduce the loss") {
    const int n = 16;
    std::vector<double> lv(n), gv(n);
    for (auto& v : lv) v = (double(rng() % 2001) - 1000.0) / 1000.0;
    for (auto& v : gv) v = double(rng() % 2);
    auto T = constant({n}, gv);
    auto logits = leaf({n}, lv);
    double prev = 1e300;
    for (int it = 0; it < 20; ++it) {
      auto loss = metrics::cd_loss(sigmoid(logits), T, cfg);
      REQUIRE(loss->values[0] < prev);
      prev = loss->values[0];
      backward(loss);
      for (int i = 0; i < n; ++i) logits->values[i] -= 0.05 * logits->grad[i];
    }
  }
}

TEST_CASE("confusion counting") {
  std::mt19937_64 rng(17);

  SUBCASE("pred == gt has no errors") {
    auto m = random_mask(rng, 8, 8);
    auto cm = metrics::confusion(m, m);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
    CHECK(cm.total() == 64);
  }
  SUBCASE("pred == !gt has no hits") {
    auto g = random_mask(rng, 8, 8);
    auto p = g;
    for (auto& v : p.values) v = 1 - v;
    auto cm = metrics::confusion(p, g);
    CHECK(cm.tp == 0);
    CHECK(cm.tn == 0);
  }
  SUBCASE("random masks match the pixel-loop oracle") {
    for (int t = 0; t < 300; ++t) {
      auto p = random_mask(rng, 8, 8, 0.3);
      auto g = random_mask(rng, 8, 8, 0.3);
      auto cm = metrics::confusion(p, g);
      auto oc = oracles::count_pixels(p, g);
      REQUIRE(cm.tp == oc.tp);
      REQUIRE(cm.fp == oc.fp);
      REQUIRE(cm.fn == oc.fn);
      REQUIRE(cm.tn == oc.tn);
    }
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(
        metrics::confusion(grid::ChangeMask::zeros(8, 8), grid::ChangeMask::zeros(4, 8)),
        std::invalid_argument);
  }
}

TEST_CASE("metric derivations") {
  SUBCASE("hand example tp=50 fp=10 fn=10 tn=30") {
    auto m = metrics::metrics({50, 10, 10, 30});
    CHECK(m.precision == Approx(50.0 / 60.0).epsilon(1e-12));
    CHECK(m.recall == Approx(50.0 / 60.0).epsilon(1e-12));
    CHECK(m.f1 == Approx(50.0 / 60.0).epsilon(1e-12));
    CHECK(m.iou == Approx(50.0 / 70.0).epsilon(1e-12));
    CHECK(m.oa == Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("perfect prediction scores 1 everywhere") {
    auto m = metrics::metrics({64, 0, 0, 0});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.iou == 1.0);
    CHECK(m.oa == 1.0);
  }
  SUBCASE("both-empty conventions give 1, one-sided give 0") {
    auto e = metrics::metrics({0, 0, 0, 10});
    CHECK(e.precision == 1.0);
    CHECK(e.recall == 1.0);
    CHECK(e.f1 == 1.0);
    CHECK(e.iou == 1.0);

    // one-sided emptiness: the zero-denominator metric collapses to 0, so a
    // spurious prediction on an empty scene is punished rather than excused
    auto fp_only = metrics::metrics({0, 5, 0, 5});
    CHECK(fp_only.precision == 0.0);
    CHECK(fp_only.recall == 0.0);
    CHECK(fp_only.f1 == 0.0);
    CHECK(fp_only.iou == 0.0);

    auto fn_only = metrics::metrics({0, 0, 5, 5});
    CHECK(fn_only.precision == 0.0);
    CHECK(fn_only.recall == 0.0);
    CHECK(fn_only.f1 == 0.0);
  }
  SUBCASE("empty matrix is rejected") {
    CHECK_THROWS_AS(metrics::metrics({0, 0, 0, 0}), std::invalid_argument);
  }
  SUBCASE("f1 equals 2*iou/(1+iou) on random matrices") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 2000; ++t) {
      metrics::ConfusionMatrix cm{rng() % 50, rng() % 50, rng() % 50, rng() % 50 + 1};
      auto m = metrics::metrics(cm);
      REQUIRE(std::fabs(m.f1 - 2.0 * m.iou / (1.0 + m.iou)) < 1e-12);
    }
  }
}
