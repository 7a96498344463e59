#include "fsr/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fsr {

TensorD to_luma(const TensorD& x) {
  if (x.ndim() != 4 || x.shape[1] != 3)
    throw std::invalid_argument("to_luma: need Nx3xHxW, got " + x.shape_str());
  TensorD y({x.shape[0], 1, x.shape[2], x.shape[3]});
  const int64_t HW = x.shape[2] * x.shape[3];
  for (int64_t n = 0; n < x.shape[0]; ++n) {
    const double* r = &x.data[static_cast<size_t>(n * 3 * HW)];
    const double* g = r + HW;
    const double* b = g + HW;
    double* yp = &y.data[static_cast<size_t>(n * HW)];
    for (int64_t i = 0; i < HW; ++i) yp[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return y;
}

double psnr(const TensorD& a, const TensorD& b, bool y_channel) {
  check_same_shape(a, b, "psnr");
  const bool use_luma = y_channel && a.ndim() == 4 && a.shape[1] == 3;
  const TensorD ya = use_luma ? to_luma(a) : a;
  const TensorD yb = use_luma ? to_luma(b) : b;
  double mse = 0.0;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    const double d = ya.data[i] - yb.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ya.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - kWin / 2, dx = j - kWin / 2;
      w[static_cast<size_t>(i * kWin + j)] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      sum += w[static_cast<size_t>(i * kWin + j)];
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

double ssim(const TensorD& a, const TensorD& b) {
  check_same_shape(a, b, "ssim");
  if (a.ndim() != 4) throw std::invalid_argument("ssim: need NCHW, got " + a.shape_str());
  const TensorD ya = (a.shape[1] == 3) ? to_luma(a) : a;
  const TensorD yb = (b.shape[1] == 3) ? to_luma(b) : b;
  const int64_t H = ya.shape[2], W = ya.shape[3];
  if (H < kWin || W < kWin)
    throw std::invalid_argument("ssim: image " + a.shape_str() + " smaller than the 11x11 window");
  static const std::vector<double> win = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t nc = 0; nc < ya.shape[0] * ya.shape[1]; ++nc) {
    const double* pa = &ya.data[static_cast<size_t>(nc * H * W)];
    const double* pb = &yb.data[static_cast<size_t>(nc * H * W)];
    for (int64_t h = 0; h + kWin <= H; ++h)
      for (int64_t w = 0; w + kWin <= W; ++w) {
        double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double g = win[static_cast<size_t>(i * kWin + j)];
            const double xa = pa[(h + i) * W + w + j];
            const double xb = pb[(h + i) * W + w + j];
            ma += g * xa;
            mb += g * xb;
            va += g * xa * xa;
            vb += g * xb * xb;
            cov += g * xa * xb;
          }
        va -= ma * ma;
        vb -= mb * mb;
        cov -= ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  if (std::isinf(v)) {
    os << "inf";
  } else {
    os << std::fixed << std::setprecision(4) << v;
  }
  return os.str();
}

}  // namespace

std::string EvalReport::to_table() const {
  std::ostringstream os;
  if (!note.empty()) os << "# " << note << "\n";
  os << "# config_digest=" << config_digest << " seeds=" << seeds << "\n";
  os << std::left << std::setw(28) << "method" << std::setw(8) << "steps" << std::setw(12) << "psnr_db"
     << std::setw(10) << "ssim" << std::setw(16) << "surrogate_lpips" << "\n";
  for (const auto& r : rows)
    os << std::left << std::setw(28) << r.label << std::setw(8) << r.steps << std::setw(12) << fmt(r.psnr_db)
       << std::setw(10) << fmt(r.ssim) << std::setw(16) << fmt(r.surrogate_lpips) << "\n";
  return os.str();
}

std::string EvalReport::to_records() const {
  std::ostringstream os;
  for (const auto& r : rows)
    os << "method=" << r.label << " steps=" << r.steps << " psnr_db=" << fmt(r.psnr_db)
       << " ssim=" << fmt(r.ssim) << " surrogate_lpips=" << fmt(r.surrogate_lpips)
       << " config_digest=" << config_digest << " seeds=" << seeds << "\n";
  return os.str();
}

}  // namespace fsr
