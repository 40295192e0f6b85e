#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "wrt/metrics.hpp"

using namespace wrt;

TEST_CASE("nrmse examples") {
  const std::vector<double> t{1.0, 2.0, 3.0, 4.0};
  CHECK(nrmse(t, t) == 0.0);
  std::vector<double> twice(t);
  for (auto& x : twice) x *= 2.0;
  CHECK(nrmse(twice, t) == doctest::Approx(1.0).epsilon(1e-15));
  // Unit-norm truth over N voxels plus a constant offset delta: error norm is delta sqrt(N).
  const std::size_t N = 100;
  std::vector<double> unit(N, 1.0 / std::sqrt(static_cast<double>(N))), shifted(N);
  const double delta = 0.03;
  for (std::size_t i = 0; i < N; ++i) shifted[i] = unit[i] + delta;
  CHECK(nrmse(shifted, unit) == doctest::Approx(delta * std::sqrt(static_cast<double>(N))).epsilon(1e-12));
  const std::vector<float> tf{1.0f, 1.0f}, rf{1.0f, 2.0f};
  CHECK(nrmse(rf, tf) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(nrmse(std::vector<double>{1.0}, t), InvalidArgument);
  CHECK_THROWS_AS(nrmse(t, std::vector<double>(4, 0.0)), InvalidArgument);
}

TEST_CASE("nrmse is non-negative and scales linearly with the error") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> t(50), e(50), a(50), b(50);
    for (auto& x : t) x = N(rng) + 3.0;
    for (auto& x : e) x = N(rng);
    const double alpha = std::abs(N(rng)) * 3.0;
    for (std::size_t i = 0; i < 50; ++i) {
      a[i] = t[i] + alpha * e[i];
      b[i] = t[i] + e[i];
    }
    CHECK(nrmse(a, t) >= 0.0);
    CHECK(nrmse(a, t) == doctest::Approx(alpha * nrmse(b, t)).epsilon(1e-10));
  }
}

TEST_CASE("binary rates examples") {
  const std::vector<std::uint8_t> truth{1, 1, 1, 1, 0, 0, 0, 0};
  SUBCASE("perfect prediction") {
    const auto r = binary_rates(truth, truth);
    CHECK(*r.tpr == 1.0);
    CHECK(*r.fpr == 0.0);
    CHECK(*r.precision == 1.0);
  }
  SUBCASE("complement") {
    std::vector<std::uint8_t> inv(truth.size());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = !truth[i];
    const auto r = binary_rates(inv, truth);
    CHECK(*r.tpr == 0.0);
    CHECK(*r.fpr == 1.0);
  }
  SUBCASE("half of the positives, no false alarms") {
    const std::vector<std::uint8_t> p{1, 1, 0, 0, 0, 0, 0, 0};
    const auto r = binary_rates(p, truth);
    CHECK(*r.tpr == 0.5);
    CHECK(*r.precision == 1.0);
    CHECK(r.tp == 2);
    CHECK(r.fn == 2);
    CHECK(r.tn == 4);
    CHECK(r.fp == 0);
  }
  SUBCASE("undefined rates are absent") {
    const std::vector<std::uint8_t> zeros(8, 0), ones(8, 1);
    CHECK_FALSE(binary_rates(zeros, zeros).tpr.has_value());
    CHECK_FALSE(binary_rates(zeros, truth).precision.has_value());
    CHECK_FALSE(binary_rates(ones, ones).fpr.has_value());
    const auto j = to_json(binary_rates(zeros, zeros));
    CHECK(j["tpr"].is_null());
  }
  CHECK_THROWS_AS(binary_rates(truth, std::vector<std::uint8_t>(3)), InvalidArgument);
}

TEST_CASE("rates stay in range and TPR + FNR = 1") {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> p(40), t(40);
    for (auto& x : p) x = coin(rng);
    for (auto& x : t) x = coin(rng);
    t[0] = 1;
    const auto r = binary_rates(p, t);
    REQUIRE(r.tpr.has_value());
    const double fnr = static_cast<double>(r.fn) / static_cast<double>(r.tp + r.fn);
    CHECK(*r.tpr + fnr == doctest::Approx(1.0));
    for (auto v : {r.tpr, r.fpr, r.precision})
      if (v) {
        CHECK(*v >= 0.0);
        CHECK(*v <= 1.0);
      }
  }
}

TEST_CASE("evaluate pairs grains with domains and scores every channel") {
  const VolumeShape s{4, 4, 1};
  const WavelengthGrid grid({3.0, 3.5});
  HyperVolume truth{2, s, std::vector<float>(32, 1.0f)};
  HyperVolume rec = truth;
  rec.data[0] = 2.0f;
  BraggMapStack bt{2, 1, 1, 4, {1, 0, 0, 0, 0, 0, 0, 0}};
  BraggMapStack bp{2, 1, 1, 4, {1, 1, 0, 0, 0, 0, 0, 0}};
  LabelVolume labels{s, std::vector<std::int32_t>(16, 0), 1};
  LabelVolume domains{s, std::vector<std::int32_t>(16, 0), 2};
  for (int i : {0, 1, 4, 5}) labels.labels[i] = 1;
  for (int i : {1, 5}) domains.labels[i] = 2;
  for (int i : {10, 11}) domains.labels[i] = 1;
  const std::vector<std::uint8_t> sig_truth{1, 0};  // (grain 1, view 0, channel 0..1)
  CrystalSignature s1{1, 1, 2, {0, 0}, {0, 0}}, s2{2, 1, 2, {1, 1}, {1, 1}};
  const std::vector<CrystalSignature> sigs{s1, s2};

  EvalInputs in;
  in.grid = grid;
  in.truth = &truth;
  in.rmbir = &rec;
  in.bragg_truth = &bt;
  in.bragg_predicted = &bp;
  in.truth_labels = &labels;
  in.domains = &domains;
  in.signature_truth = sig_truth;
  in.signatures = &sigs;
  const auto report = evaluate(in);
  REQUIRE(report.channels.size() == 2);
  CHECK(*report.channels[0].nrmse_rmbir == doctest::Approx(1.0 / 4.0));
  CHECK(*report.channels[1].nrmse_rmbir == 0.0);
  CHECK_FALSE(report.channels[0].nrmse_fbp.has_value());
  CHECK(report.channels[0].affected);
  CHECK_FALSE(report.channels[1].affected);
  CHECK(*report.channels[0].bragg->tpr == 1.0);
  CHECK(*report.channels[0].bragg->precision == 0.5);
  REQUIRE(report.grains.size() == 1);
  CHECK(report.grains[0].domain == 2);
  CHECK(report.grains[0].overlap == 2);
  CHECK(*report.grains[0].signature->tpr == 1.0);
  CHECK(*report.grains[0].signature->fpr == 1.0);
  CHECK(report.domain_count == 2);
  const auto j = report.to_json();
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["channels"].size() == 2);
}
