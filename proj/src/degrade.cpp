#include "fsr/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fsr/rng.hpp"

namespace fsr {

void DegradeConfig::validate() const {
  if (scale != 2 && scale != 4) throw std::invalid_argument("degrade: scale must be 2 or 4");
  if (blur_sigma_lo < 0 || blur_sigma_lo > blur_sigma_hi)
    throw std::invalid_argument("degrade: bad blur sigma range");
  if (noise_sigma_lo < 0 || noise_sigma_lo > noise_sigma_hi || noise_sigma_hi > 0.3)
    throw std::invalid_argument("degrade: noise sigma range must lie in [0, 0.3]");
}

namespace {

double clamp01d(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// smooth value noise: random lattice, bilinear interpolation, smoothstep
void add_value_noise(TensorD& img, int c, Rng& rng, int cells, double amp) {
  const int64_t H = img.shape[2], W = img.shape[3];
  std::vector<double> lattice(static_cast<size_t>((cells + 1) * (cells + 1)));
  for (auto& v : lattice) v = rng.uniform() * 2.0 - 1.0;
  auto smooth = [](double u) { return u * u * (3.0 - 2.0 * u); };
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w) {
      const double fy = static_cast<double>(h) / static_cast<double>(H) * cells;
      const double fx = static_cast<double>(w) / static_cast<double>(W) * cells;
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const double uy = smooth(fy - y0), ux = smooth(fx - x0);
      auto at = [&](int y, int x) { return lattice[static_cast<size_t>(y * (cells + 1) + x)]; };
      const double v = (1 - uy) * ((1 - ux) * at(y0, x0) + ux * at(y0, x0 + 1)) +
                       uy * ((1 - ux) * at(y0 + 1, x0) + ux * at(y0 + 1, x0 + 1));
      img.at4(0, c, h, w) += amp * v;
    }
}

void add_grating(TensorD& img, int c, Rng& rng) {
  const int64_t H = img.shape[2], W = img.shape[3];
  const double theta = rng.uniform() * 2.0 * M_PI;
  const double freq = rng.uniform_range(2.0, 6.0) * 2.0 * M_PI;
  const double phase = rng.uniform() * 2.0 * M_PI;
  const double amp = rng.uniform_range(0.05, 0.2);
  const double kx = std::cos(theta) * freq, ky = std::sin(theta) * freq;
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w) {
      const double y = static_cast<double>(h) / H, x = static_cast<double>(w) / W;
      img.at4(0, c, h, w) += amp * std::sin(kx * x + ky * y + phase);
    }
}

void add_polygon(TensorD& img, Rng& rng) {
  const int64_t H = img.shape[2], W = img.shape[3];
  // random convex quad as intersection of 4 half planes around a centre
  const double cy = rng.uniform(), cx = rng.uniform();
  const double r = rng.uniform_range(0.1, 0.35);
  const int sides = 3 + static_cast<int>(rng.uniform_int(3));
  std::vector<double> angs(static_cast<size_t>(sides));
  for (auto& a : angs) a = rng.uniform() * 2.0 * M_PI;
  std::sort(angs.begin(), angs.end());
  std::vector<std::pair<double, double>> pts;
  for (double a : angs) pts.emplace_back(cy + r * std::sin(a), cx + r * std::cos(a));
  std::vector<double> delta(static_cast<size_t>(img.shape[1]));
  for (auto& d : delta) d = rng.uniform_range(-0.4, 0.4);
  auto inside = [&](double y, double x) {
    // point-in-polygon by winding (convex, CCW sorted)
    for (size_t i = 0; i < pts.size(); ++i) {
      const auto& p0 = pts[i];
      const auto& p1 = pts[(i + 1) % pts.size()];
      const double cross = (p1.second - p0.second) * (y - p0.first) - (p1.first - p0.first) * (x - p0.second);
      if (cross < 0) return false;
    }
    return true;
  };
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w)
      if (inside((h + 0.5) / H, (w + 0.5) / W))
        for (int64_t c = 0; c < img.shape[1]; ++c) img.at4(0, c, h, w) += delta[static_cast<size_t>(c)];
}

}  // namespace

TensorD make_texture(uint64_t seed, int size, int channels) {
  if (size < 8) throw std::invalid_argument("make_texture: size must be >= 8");
  if (channels < 1) throw std::invalid_argument("make_texture: channels must be >= 1");
  Rng rng(splitmix64(seed));
  TensorD img({1, channels, size, size}, 0.5);
  // shared luma-like structure plus per-channel variation
  for (int c = 0; c < channels; ++c) {
    Rng shared(derive_seed(seed, 1));  // same lattice across channels
    add_value_noise(img, c, shared, 4, 0.25);
  }
  for (int c = 0; c < channels; ++c) add_value_noise(img, c, rng, 8, 0.1);
  const int gratings = 1 + static_cast<int>(rng.uniform_int(3));
  for (int k = 0; k < gratings; ++k) {
    Rng grng(derive_seed(seed, 100 + static_cast<uint64_t>(k)));
    for (int c = 0; c < channels; ++c) {
      Rng copy = grng;  // same grating on every channel
      add_grating(img, c, copy);
    }
  }
  const int polys = 1 + static_cast<int>(rng.uniform_int(3));
  for (int k = 0; k < polys; ++k) add_polygon(img, rng);
  for (auto& v : img.data) v = clamp01d(v);
  return img;
}

TensorD gaussian_blur(const TensorD& x, double sigma) {
  if (sigma < 1e-9) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  TensorD tmp(x.shape), out(x.shape);
  // separable: horizontal then vertical, replicate borders
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<size_t>(i + radius)] * x.data[static_cast<size_t>((nc * H + h) * W + clampi(w + i, W))];
        tmp.data[static_cast<size_t>((nc * H + h) * W + w)] = s;
      }
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<size_t>(i + radius)] * tmp.data[static_cast<size_t>((nc * H + clampi(h + i, H)) * W + w)];
        out.data[static_cast<size_t>((nc * H + h) * W + w)] = s;
      }
  return out;
}

TensorD area_down2(const TensorD& x) {
  const int64_t H = x.shape[2], W = x.shape[3];
  if (H % 2 || W % 2) throw std::invalid_argument("area_down2: odd extents in " + x.shape_str());
  TensorD out({x.shape[0], x.shape[1], H / 2, W / 2});
  for (int64_t nc = 0; nc < x.shape[0] * x.shape[1]; ++nc)
    for (int64_t h = 0; h < H / 2; ++h)
      for (int64_t w = 0; w < W / 2; ++w) {
        const double* r0 = &x.data[static_cast<size_t>((nc * H + 2 * h) * W + 2 * w)];
        const double* r1 = r0 + W;
        out.data[static_cast<size_t>((nc * (H / 2) + h) * (W / 2) + w)] =
            0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  return out;
}

TensorD degrade(const TensorD& x_hr, const DegradeConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (x_hr.ndim() != 4) throw std::invalid_argument("degrade: need NCHW, got " + x_hr.shape_str());
  if (x_hr.shape[2] % cfg.scale || x_hr.shape[3] % cfg.scale)
    throw std::invalid_argument("degrade: extents of " + x_hr.shape_str() + " not divisible by scale " +
                                std::to_string(cfg.scale));
  Rng rng(derive_seed(cfg.seed, seed));
  const double blur_sigma = rng.uniform_range(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
  const double noise_sigma = rng.uniform_range(cfg.noise_sigma_lo, cfg.noise_sigma_hi);
  TensorD x = gaussian_blur(x_hr, blur_sigma);
  for (int s = cfg.scale; s > 1; s /= 2) x = area_down2(x);
  if (noise_sigma > 0.0)
    for (auto& v : x.data) v += noise_sigma * rng.normal();
  for (auto& v : x.data) v = clamp01d(v);
  return x;
}

TensorD upscale(const TensorD& x_small, int scale, UpscaleMethod method) {
  if (scale != 2 && scale != 4) throw std::invalid_argument("upscale: scale must be 2 or 4");
  const int64_t N = x_small.shape[0], C = x_small.shape[1], H = x_small.shape[2], W = x_small.shape[3];
  TensorD out({N, C, H * scale, W * scale});
  if (method == UpscaleMethod::nearest) {
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H * scale; ++h)
          for (int64_t w = 0; w < W * scale; ++w)
            out.at4(n, c, h, w) = x_small.at4(n, c, h / scale, w / scale);
    return out;
  }
  // bilinear with half-pixel alignment and replicate borders
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H * scale; ++h)
        for (int64_t w = 0; w < W * scale; ++w) {
          const double sy = (h + 0.5) / scale - 0.5, sx = (w + 0.5) / scale - 0.5;
          const int64_t y0 = static_cast<int64_t>(std::floor(sy)), x0 = static_cast<int64_t>(std::floor(sx));
          const double uy = sy - y0, ux = sx - x0;
          auto at = [&](int64_t y, int64_t x) {
            y = std::clamp<int64_t>(y, 0, H - 1);
            x = std::clamp<int64_t>(x, 0, W - 1);
            return x_small.at4(n, c, y, x);
          };
          out.at4(n, c, h, w) = (1 - uy) * ((1 - ux) * at(y0, x0) + ux * at(y0, x0 + 1)) +
                                uy * ((1 - ux) * at(y0 + 1, x0) + ux * at(y0 + 1, x0 + 1));
        }
  return out;
}

ImagePair make_pair(uint64_t seed, int size, const DegradeConfig& cfg) {
  ImagePair pair;
  pair.x_hr = make_texture(seed, size);
  TensorD small = degrade(pair.x_hr, cfg, seed);
  pair.x_lr = upscale(small, cfg.scale, UpscaleMethod::nearest);
  return pair;
}

}  // namespace fsr
