#include <doctest.h>

#include <cmath>

#include "adsr/energy.hpp"
#include "adsr/error.hpp"
#include "adsr/image.hpp"
#include "adsr/metrics.hpp"
#include "oracles.hpp"

using namespace adsr;

namespace {

ImagePlane ramp(std::size_t w, std::size_t h) {
  ImagePlane img(w, h, 1, ColorSpace::gray, SampleRange::byte);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(x, y) = 255.0 * static_cast<double>(x + y) / static_cast<double>(w + h - 2);
  return img;
}

// Direct windowed SSIM: every 11x11 window evaluated from scratch.
double ssim_direct(const ImagePlane& a, const ImagePlane& b, double peak) {
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y)
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / gs, va = a.at(x + j, y + i), vb = b.at(x + j, y + i);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const ImagePlane a = ramp(16, 12);
  CHECK(std::isinf(psnr(a, a, 255.0)));
  CHECK(psnr(a, a, 255.0) > 0);

  ImagePlane b = a;
  for (double& v : b.samples) v += 1.0;
  CHECK(psnr(a, b, 255.0) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-12));
  CHECK(std::fabs(psnr(a, b, 255.0) - 48.1308036) < 1e-6);

  const ImagePlane zero(8, 8, 1, ColorSpace::gray, SampleRange::byte, 0.0);
  const ImagePlane full(8, 8, 1, ColorSpace::gray, SampleRange::byte, 255.0);
  CHECK(std::fabs(psnr(zero, full, 255.0)) < 1e-12);
}

TEST_CASE("psnr symmetry, shift invariance and cropping") {
  const ImagePlane a = ramp(20, 20);
  ImagePlane b = a;
  for (std::size_t i = 0; i < b.samples.size(); ++i) b.samples[i] += std::sin(static_cast<double>(i)) * 3.0;
  CHECK(psnr(a, b, 255.0) == psnr(b, a, 255.0));
  ImagePlane as = a, bs = b;
  for (double& v : as.samples) v += 17.0;
  for (double& v : bs.samples) v += 17.0;
  CHECK(psnr(as, bs, 255.0) == doctest::Approx(psnr(a, b, 255.0)).epsilon(1e-12));

  // A difference confined to the border disappears once cropped.
  ImagePlane c = a;
  c.at(0, 5) += 50.0;
  c.at(19, 19) -= 50.0;
  CHECK(std::isinf(psnr(a, c, 255.0, 2)));
  CHECK(std::isfinite(psnr(a, c, 255.0, 0)));
  CHECK_THROWS_AS(psnr(a, ramp(10, 10), 255.0), ShapeError);
  CHECK_THROWS_AS(psnr(a, b, 255.0, 10), ParameterError);
  CHECK_THROWS_AS(psnr(a, b, 0.0), ParameterError);
}

TEST_CASE("ssim properties") {
  const ImagePlane a = ramp(24, 20);
  CHECK(ssim(a, a, 255.0) == 1.0);

  ImagePlane inv = a;
  for (double& v : inv.samples) v = 255.0 - v;
  CHECK(ssim(a, inv, 255.0) < 0.5);

  ImagePlane noisy = a;
  const Tensor n = seeded_uniform({1, 1, 1, noisy.samples.size()}, -1, 1, 3);
  // Uniform noise on [-sqrt(3), sqrt(3)] * sigma has standard deviation sigma.
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) noisy.samples[i] += n[i] * std::sqrt(3.0) * 255.0 / 1000.0;
  CHECK(ssim(a, noisy, 255.0) > 0.99);

  const double s = ssim(a, inv, 255.0);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK_THROWS_AS(ssim(ramp(10, 30), ramp(10, 30), 255.0), ParameterError);
}

TEST_CASE("ssim matches a direct window oracle") {
  const Tensor r1 = seeded_uniform({1, 1, 17, 15}, 0, 255, 8);
  const Tensor r2 = seeded_uniform({1, 1, 17, 15}, 0, 255, 9);
  ImagePlane a(15, 17, 1, ColorSpace::gray, SampleRange::byte), b = a;
  a.samples = r1.storage();
  for (std::size_t i = 0; i < a.samples.size(); ++i) b.samples[i] = 0.7 * a.samples[i] + 0.3 * r2[i];
  CHECK(ssim(a, b, 255.0) == doctest::Approx(ssim_direct(a, b, 255.0)).epsilon(1e-10));
}

TEST_CASE("quality score formatting") {
  const ImagePlane a = ramp(30, 30);
  ImagePlane b = a;
  for (double& v : b.samples) v += 2.0;
  const QualityScore q = quality(a, b, 255.0, 2);
  CHECK(q.border_crop == 2);
  CHECK(q.n_pixels == 26 * 26);
  CHECK(q.str() == "42.11/" + q.str().substr(6));
  CHECK(q.str().size() == std::string("42.11/0.9999").size());
}

TEST_CASE("op counts on the trivial network") {
  NetworkSpec s;
  s.layers = {{LayerKind::conv, 1, 1, 1, Activation::none}};
  const auto c = count_ops(s, 1, 1);
  CHECK(c[0].n_mul == 1);
  CHECK(c[0].n_add == 1);
  CHECK(energy(c).total_picojoule == doctest::Approx(4.6));
}

TEST_CASE("VDSR op counts at 720p") {
  const auto conv = total_ops(count_ops(vdsr_spec(Variant::conv), 720, 1280), false);
  CHECK(std::fabs(conv.n_mul / 1e9 - 612.6) / 612.6 < 0.005);
  const auto adder_ops = count_ops(vdsr_spec(Variant::adder), 720, 1280);
  const auto core = total_ops(adder_ops, false);
  CHECK(std::fabs(core.n_add / 1e9 - 1224.1) / 1224.1 < 0.01);
  CHECK(std::round(core.n_mul / 1e8) / 10 == doctest::Approx(1.1));

  // Overhead: 18 shortcuts and 18 power activations of 64 x 921600.
  const auto all = total_ops(adder_ops, true);
  CHECK(all.n_add - core.n_add == 18ULL * 64 * 921600);
  CHECK(all.n_mul - core.n_mul == 18ULL * 64 * 921600);
}

TEST_CASE("op counts scale linearly with the image") {
  for (Variant v : {Variant::conv, Variant::adder}) {
    const auto a = count_ops(vdsr_spec(v), 30, 40);
    const auto b = count_ops(vdsr_spec(v), 30, 80);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b[i].n_mul == 2 * a[i].n_mul);
      CHECK(b[i].n_add == 2 * a[i].n_add);
      CHECK(b[i].overhead_add == 2 * a[i].overhead_add);
      CHECK(b[i].overhead_mul == 2 * a[i].overhead_mul);
    }
  }
}

TEST_CASE("energy pricing") {
  CHECK(energy(OpTotals{0, 0}, false, CnnConvention::mul_plus_add).total_picojoule == 0.0);
  const auto ann = energy(OpTotals{1'100'000'000ULL, 1'224'100'000'000ULL}, false, CnnConvention::mul_only);
  CHECK(ann.total_picojoule / 1e9 == doctest::Approx(1105.76));
  CHECK_FALSE(ann.priced_as_cnn);
  const auto cnn = energy(OpTotals{612'600'000'000ULL, 612'600'000'000ULL}, true, CnnConvention::mul_only);
  CHECK(cnn.total_picojoule / 1e9 == doctest::Approx(2266.62));

  const auto rows = count_ops(tiny_vdsr_spec(Variant::adder, 6, 8, 2), 16, 16);
  const EnergyReport r = energy(rows);
  double sum = 0.0;
  std::uint64_t mul = 0, add = 0;
  for (const auto& row : r.rows) {
    sum += row.picojoule;
    mul += row.n_mul;
    add += row.n_add;
    CHECK(row.picojoule == doctest::Approx(3.7 * row.n_mul + 0.9 * row.n_add));
  }
  CHECK(r.total_picojoule == doctest::Approx(3.7 * mul + 0.9 * add));
  CHECK(r.total_picojoule == doctest::Approx(sum));
  CHECK(r.csv().rfind("name,n_mul,n_add,pJ\n", 0) == 0);
  CHECK(r.table().find("total") != std::string::npos);

  CHECK(parse_cnn_convention("mul-only") == CnnConvention::mul_only);
  CHECK_THROWS_AS(parse_cnn_convention("mul"), ConfigError);
}

TEST_CASE("adder variant is cheaper whenever interior layers exist") {
  for (int depth : {3, 5, 20}) {
    for (auto conv : {CnnConvention::mul_plus_add, CnnConvention::mul_only}) {
      const auto a = energy(count_ops(tiny_vdsr_spec(Variant::adder, depth, 16, 2), 32, 32), {conv, true});
      const auto c = energy(count_ops(tiny_vdsr_spec(Variant::conv, depth, 16, 2), 32, 32), {conv, true});
      CHECK(a.total_picojoule < c.total_picojoule);
    }
  }
}
