#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mrsr/core/grad_check.hpp"
#include "mrsr/metrics/quality.hpp"
#include "mrsr/metrics/resize.hpp"
#include "support/oracles.hpp"

using namespace mrsr;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) { return Image(h, w, oracle::random_vec(h * w, rng, 0, 1)); }

double oracle_psnr(const Image& a, const Image& b, double peak) {
    double s = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
    return 10.0 * std::log10(peak * peak / (s / a.pixels.size()));
}

// Direct 2D bicubic sum over the 4x4 neighbourhood (upscaling only).
double oracle_bicubic_up(const Image& img, double scale, std::size_t oy, std::size_t ox) {
    const double cy = (oy + 0.5) / scale - 0.5, cx = (ox + 0.5) / scale - 0.5;
    double acc = 0;
    for (long j = long(std::floor(cy)) - 1; j <= long(std::floor(cy)) + 2; ++j)
        for (long i = long(std::floor(cx)) - 1; i <= long(std::floor(cx)) + 2; ++i) {
            const long jj = std::clamp(j, 0L, long(img.height) - 1), ii = std::clamp(i, 0L, long(img.width) - 1);
            acc += oracle::cubic(j - cy) * oracle::cubic(i - cx) * img(jj, ii);
        }
    return acc;
}

}  // namespace

TEST(Psnr, Examples) {
    Image a(8, 8, 0.3);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    Image b(8, 8, 0.4);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    std::mt19937_64 rng(1);
    auto x = random_image(16, 16, rng), y = random_image(16, 16, rng);
    EXPECT_NEAR(psnr(x, y, 1.0), oracle_psnr(x, y, 1.0), 1e-9);
    EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), DimensionError);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    Image ref(8, 8, 0.5);
    double prev = std::numeric_limits<double>::infinity();
    for (double d : {0.001, 0.01, 0.05, 0.1, 0.3}) {
        const double v = psnr(ref, Image(8, 8, 0.5 + d));
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Ssim, IdentitySymmetryAndOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        auto x = random_image(32, 32, rng), y = random_image(32, 32, rng);
        EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
        EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-9);
        EXPECT_LT(ssim(x, y), 1.0 - 1e-9);
        EXPECT_NEAR(ssim(x, y), oracle::ssim(x.pixels, y.pixels, 32, 32, 1.0), 1e-6);
    }
    EXPECT_THROW(ssim(Image(8, 8), Image(8, 8)), DimensionError);
}

TEST(Ssim, StaysInRange) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        auto x = random_image(16, 16, rng);
        Image y = x;
        for (double& v : y.pixels) v = 1.0 - v;
        const double s = ssim(x, y);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Nmse, Examples) {
    std::mt19937_64 rng(4);
    auto x = random_image(8, 8, rng);
    EXPECT_EQ(nmse(x, x), 0.0);
    EXPECT_NEAR(nmse(x, Image(8, 8, 0.0)), 1.0, 1e-12);
    Image twice = x;
    for (double& v : twice.pixels) v *= 2;
    EXPECT_NEAR(nmse(x, twice), 1.0, 1e-12);
    EXPECT_THROW(nmse(Image(4, 4, 0.0), x), DimensionError);
    EXPECT_THROW(nmse(Image(8, 8, 0.0), x), DomainError);
}

TEST(Nmse, InvariantUnderJointScaling) {
    std::mt19937_64 rng(5);
    auto x = random_image(8, 8, rng), y = random_image(8, 8, rng);
    Image xs = x, ys = y;
    for (double& v : xs.pixels) v *= 3.7;
    for (double& v : ys.pixels) v *= 3.7;
    EXPECT_NEAR(nmse(x, y), nmse(xs, ys), 1e-12);
}

TEST(Bicubic, ConstantStaysConstant) {
    Image c(12, 10, 0.42);
    for (double f : {0.5, 1.0, 1.5, 2.0, 4.0}) {
        auto r = bicubic_resize(c, f);
        for (double v : r.pixels) EXPECT_NEAR(v, 0.42, 1e-12);
    }
}

TEST(Bicubic, FactorOneIsIdentity) {
    std::mt19937_64 rng(6);
    auto x = random_image(9, 13, rng);
    auto r = bicubic_resize(x, 1.0);
    ASSERT_TRUE(r.same_extents(x));
    for (std::size_t i = 0; i < x.pixels.size(); ++i) EXPECT_NEAR(r.pixels[i], x.pixels[i], 1e-9);
}

TEST(Bicubic, UpscaledRampMatchesDirectKernelSum) {
    Image ramp(8, 8);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) ramp(y, x) = 0.1 * x + 0.05 * y;
    auto up = bicubic_resize(ramp, 2.0);
    ASSERT_EQ(up.height, 16u);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) EXPECT_NEAR(up(y, x), oracle_bicubic_up(ramp, 2.0, y, x), 1e-6);
}

TEST(Bicubic, RandomUpscaleMatchesDirectKernelSum) {
    std::mt19937_64 rng(7);
    auto x = random_image(7, 9, rng);
    auto up = bicubic_resize(x, 4.0);
    for (std::size_t oy = 0; oy < up.height; ++oy)
        for (std::size_t ox = 0; ox < up.width; ++ox) EXPECT_NEAR(up(oy, ox), oracle_bicubic_up(x, 4.0, oy, ox), 1e-9);
}

TEST(Bicubic, DegenerateExtentsRejected) {
    EXPECT_THROW(bicubic_resize(Image(4, 4, 1.0), 0.1), DimensionError);
    EXPECT_THROW(bicubic_resize(Image(4, 4, 1.0), -2.0), DimensionError);
}

TEST(Bicubic, TensorVariantMatchesImageAndHasAdjointGradient) {
    std::mt19937_64 rng(8);
    auto x = random_image(6, 6, rng);
    Tensor t = to_tensor(x);
    auto up = bicubic_resize(t, 12, 12);
    auto ref = bicubic_resize(x, 12, 12);
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) EXPECT_NEAR(up.at(i), ref.pixels[i], 1e-12);
    Tensor w(Shape{1, 12, 12}, oracle::random_vec(144, rng));
    const double err = grad_check([&](const Tensor& v) { return sum(mul(bicubic_resize(v, 12, 12), w)); }, t, 1e-5);
    EXPECT_LT(err, 1e-6);
}

TEST(EvaluatePair, IdenticalAndConsistent) {
    std::mt19937_64 rng(9);
    auto x = random_image(16, 16, rng), y = random_image(16, 16, rng);
    auto same = evaluate_pair(x, x, 2, "a");
    EXPECT_TRUE(std::isinf(same.psnr));
    EXPECT_NEAR(same.ssim, 1.0, 1e-12);
    EXPECT_EQ(same.nmse, 0.0);
    auto r = evaluate_pair(x, y, 2, "b");
    EXPECT_EQ(r.psnr, psnr(x, y));
    EXPECT_EQ(r.ssim, ssim(x, y));
    EXPECT_EQ(r.nmse, nmse(x, y));
}

TEST(EvaluatePair, BatchMeanAndCsv) {
    std::vector<MetricRecord> recs = {{"a", 2, 30.0, 0.9, 0.1}, {"b", 2, 31.0, 0.8, 0.2}, {"c", 2, 35.0, 0.7, 0.05}};
    auto m = mean_record(recs);
    EXPECT_NEAR(m.psnr, 32.0, 1e-12);
    EXPECT_NEAR(m.ssim, 0.8, 1e-12);
    EXPECT_NEAR(m.nmse, 0.35 / 3, 1e-12);
    recs.push_back({"d", 2, std::numeric_limits<double>::infinity(), 1.0, 0.0});
    auto path = std::filesystem::temp_directory_path() / "mrsr_metrics_test.csv";
    write_metrics_csv(recs, path.string());
    std::ifstream in(path);
    std::string header, line, last;
    std::getline(in, header);
    EXPECT_EQ(header, "pair_id,scale,psnr_db,ssim,nmse");
    while (std::getline(in, line)) last = line;
    EXPECT_EQ(last, "d,2,inf,1,0");
    std::filesystem::remove(path);
}

TEST(Bicubic, Deterministic) {
    std::mt19937_64 rng(10);
    auto x = random_image(16, 16, rng);
    auto a = bicubic_resize(x, 0.5), b = bicubic_resize(x, 0.5);
    EXPECT_EQ(a, b);
}
