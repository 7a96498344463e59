#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "fsr/eval.hpp"
#include "fsr/metrics.hpp"

using fsr::Rng;
using fsr::TensorD;

namespace {

TensorD random_image(uint64_t seed, int64_t h, int64_t w) {
  Rng rng(seed);
  TensorD x({1, 3, h, w});
  for (auto& v : x.data) v = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("to_luma applies BT.601 weights") {
  TensorD x({1, 3, 1, 1});
  x.data = {0.5, 0.25, 1.0};
  const TensorD y = fsr::to_luma(x);
  CHECK(y.shape == std::vector<int64_t>{1, 1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(0.299 * 0.5 + 0.587 * 0.25 + 0.114 * 1.0).epsilon(1e-15));
  TensorD bad({1, 1, 2, 2});
  CHECK_THROWS_AS(fsr::to_luma(bad), std::invalid_argument);
}

TEST_CASE("psnr sentinel, known offset, and luma behavior") {
  const TensorD a = random_image(1, 12, 12);
  CHECK(std::isinf(fsr::psnr(a, a)));
  CHECK(fsr::psnr(a, a) > 0);

  // uniform +0.1 offset on a gray image: MSE == 0.01 exactly on the Y channel
  TensorD g({1, 3, 8, 8});
  TensorD g2({1, 3, 8, 8});
  for (int64_t i = 0; i < g.numel(); ++i) {
    g.data[i] = 0.4;
    g2.data[i] = 0.5;
  }
  CHECK(fsr::psnr(g, g2) == doctest::Approx(20.0).epsilon(1e-10));

  // independent oracle: luma conversion then plain MSE
  const TensorD b = random_image(2, 12, 12);
  const TensorD ya = fsr::to_luma(a), yb = fsr::to_luma(b);
  double mse = 0;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    const double d = ya.data[i] - yb.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ya.numel());
  CHECK(fsr::psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  // y_channel=false compares all channels directly
  double mse_rgb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse_rgb += d * d;
  }
  mse_rgb /= static_cast<double>(a.numel());
  CHECK(fsr::psnr(a, b, false) == doctest::Approx(10.0 * std::log10(1.0 / mse_rgb)).epsilon(1e-12));

  CHECK_THROWS_AS(fsr::psnr(a, random_image(3, 12, 13)), std::invalid_argument);
}

TEST_CASE("psnr decreases with noise magnitude") {
  const TensorD a = random_image(4, 16, 16);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.03, 0.1}) {
    TensorD b = a;
    Rng rng(9);
    for (auto& v : b.data) v += sigma * rng.normal();
    const double p = fsr::psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim identities and closed forms") {
  const TensorD a = random_image(5, 16, 16);
  CHECK(fsr::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const TensorD b = random_image(6, 16, 16);
  CHECK(fsr::ssim(a, b) == doctest::Approx(fsr::ssim(b, a)).epsilon(1e-14));
  CHECK(fsr::ssim(a, b) < 1.0);
  CHECK(fsr::ssim(a, b) >= -1.0);

  // constant images c vs d: variances and covariance vanish, so
  // ssim == (2cd + C1) / (c^2 + d^2 + C1)
  const double c = 0.3, d = 0.7, c1 = 0.01 * 0.01;
  const TensorD ca = TensorD::full({1, 1, 12, 12}, c);
  const TensorD cb = TensorD::full({1, 1, 12, 12}, d);
  CHECK(fsr::ssim(ca, cb) == doctest::Approx((2 * c * d + c1) / (c * c + d * d + c1)).epsilon(1e-12));

  // smaller than the 11x11 window is rejected
  const TensorD tiny = TensorD::full({1, 1, 10, 12}, 0.5);
  CHECK_THROWS_AS(fsr::ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim degrades monotonically with noise") {
  const TensorD a = random_image(7, 24, 24);
  double prev = 1.0;
  for (double sigma : {0.02, 0.06, 0.15}) {
    TensorD b = a;
    Rng rng(11);
    for (auto& v : b.data) v += sigma * rng.normal();
    const double s = fsr::ssim(a, b);
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("evaluate: row count, oracle row, zero-velocity equals LR baseline") {
  fsr::DegradeConfig dcfg;
  std::vector<fsr::ImagePair> split;
  for (uint64_t i = 0; i < 3; ++i) split.push_back(fsr::make_pair(200 + i, 16, dcfg));

  fsr::NetConfig netcfg;
  netcfg.base_channels = 4;
  netcfg.depth = 2;
  netcfg.time_embed_dim = 8;
  // freshly initialized head predicts zero velocity everywhere
  const auto net = fsr::VelocityField<double>::init(netcfg, 3);
  fsr::FlowVariant var;  // sr_flow

  fsr::EvalSettings settings;
  settings.step_counts = {1, 2, 4};
  const auto report = fsr::evaluate(net, var, split, settings, "eval");
  REQUIRE(report.rows.size() == settings.step_counts.size() + 2);

  const auto& oracle = report.rows.back();
  CHECK(oracle.label == "baseline_oracle_hr");
  CHECK(std::isinf(oracle.psnr_db));
  CHECK(oracle.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle.surrogate_lpips == 0.0);

  // zero velocity leaves X_LR untouched, so every step row matches the
  // nearest-upsample baseline
  const auto& base = report.rows[report.rows.size() - 2];
  CHECK(base.label == "baseline_nearest_upsample");
  for (size_t i = 0; i < settings.step_counts.size(); ++i) {
    CHECK(report.rows[i].steps == settings.step_counts[i]);
    CHECK(report.rows[i].psnr_db == doctest::Approx(base.psnr_db).epsilon(1e-12));
    CHECK(report.rows[i].ssim == doctest::Approx(base.ssim).epsilon(1e-12));
    CHECK(report.rows[i].surrogate_lpips == doctest::Approx(base.surrogate_lpips).epsilon(1e-12));
  }

  CHECK_THROWS_AS(fsr::evaluate(net, var, {}, settings, "eval"), std::invalid_argument);
}

TEST_CASE("eval report rendering includes every row and the inf sentinel") {
  fsr::EvalReport report;
  report.config_digest = "abc123";
  report.seeds = "1,2,3";
  report.note = "note";
  report.rows.push_back({"method_a", 4, 28.5, 0.91, 0.12});
  report.rows.push_back({"baseline_oracle_hr", 0, std::numeric_limits<double>::infinity(), 1.0, 0.0});
  const std::string table = report.to_table();
  CHECK(table.find("method_a") != std::string::npos);
  CHECK(table.find("baseline_oracle_hr") != std::string::npos);
  CHECK(table.find("inf") != std::string::npos);
  CHECK(table.find("abc123") != std::string::npos);
  const std::string records = report.to_records();
  CHECK(records.find("method_a") != std::string::npos);
  CHECK(records.find("psnr") != std::string::npos);
}
