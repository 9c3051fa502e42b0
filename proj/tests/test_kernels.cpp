#include <gtest/gtest.h>

#include <vector>

#include "pdda/kernels.hpp"
#include "pdda/rng.hpp"

using namespace pdda;
using namespace pdda::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
    return v;
}

// Direct convolution straight from the definition.
std::vector<double> direct_conv(const ConvGeometry& g, const std::vector<double>& in, const std::vector<double>& w,
                                 const std::vector<double>& b) {
    std::vector<double> out(static_cast<std::size_t>(g.out_c) * g.positions());
    for (int o = 0; o < g.out_c; ++o)
        for (int oy = 0; oy < g.out_h(); ++oy)
            for (int ox = 0; ox < g.out_w(); ++ox) {
                double acc = b[o];
                for (int c = 0; c < g.in_c; ++c)
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            const double x = in[(c * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride + kx];
                            acc += w[((o * g.in_c + c) * g.kernel + ky) * g.kernel + kx] * x;
                        }
                out[o * g.positions() + oy * g.out_w() + ox] = acc;
            }
    return out;
}

}  // namespace

TEST(ConvGeometry, OutputSizes) {
    const ConvGeometry g{1, 64, 96, 16, 8, 4};
    EXPECT_EQ(g.out_h(), 15);
    EXPECT_EQ(g.out_w(), 23);
    EXPECT_EQ(g.patch(), 64);
    EXPECT_TRUE(g.valid());
    EXPECT_FALSE((ConvGeometry{1, 4, 4, 1, 5, 1}.valid()));
}

TEST(Im2col, GemmMatchesDirectConvolution) {
    Rng rng(1);
    for (const ConvGeometry g : {ConvGeometry{1, 64, 96, 16, 8, 4}, ConvGeometry{16, 15, 23, 32, 4, 2},
                                 ConvGeometry{3, 9, 7, 2, 3, 1}}) {
        const auto in = random_vector(static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w, rng);
        const auto w = random_vector(static_cast<std::size_t>(g.out_c) * g.patch(), rng);
        const auto b = random_vector(g.out_c, rng);
        std::vector<double> cols(static_cast<std::size_t>(g.positions()) * g.patch());
        im2col(g, in.data(), cols.data());
        std::vector<double> out(static_cast<std::size_t>(g.out_c) * g.positions());
        serial::gemm_nt(g.out_c, g.positions(), g.patch(), w.data(), cols.data(), b.data(), out.data());
        const auto expected = direct_conv(g, in, w, b);
        for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], expected[i], 1e-12);
    }
}

// <col2im(y), x> == <y, im2col(x)>: the scatter is the adjoint of the gather.
TEST(Col2im, IsAdjointOfIm2col) {
    Rng rng(2);
    const ConvGeometry g{2, 11, 13, 3, 3, 2};
    const auto x = random_vector(static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w, rng);
    const auto y = random_vector(static_cast<std::size_t>(g.positions()) * g.patch(), rng);
    std::vector<double> cols(y.size()), back(x.size(), 0.0);
    im2col(g, x.data(), cols.data());
    col2im_add(g, y.data(), back.data());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) lhs += back[i] * x[i];
    for (std::size_t i = 0; i < y.size(); ++i) rhs += y[i] * cols[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Gemm, MatchesTripleLoop) {
    Rng rng(3);
    const int m = 7, n = 5, k = 9;
    const auto a = random_vector(m * k, rng), b = random_vector(n * k, rng), bias = random_vector(m, rng);
    std::vector<double> c(m * n);
    serial::gemm_nt(m, n, k, a.data(), b.data(), bias.data(), c.data());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = bias[i];
            for (int x = 0; x < k; ++x) acc += a[i * k + x] * b[j * k + x];
            ASSERT_NEAR(c[i * n + j], acc, 1e-12);
        }

    // acc[i][x] += sum_j g[i][j] b[j][x] and out[j][x] = sum_i g[i][j] w[i][x]
    const auto g = random_vector(m * n, rng);
    std::vector<double> acc(m * k, 0.0), bacc(m, 0.0), out(n * k);
    serial::gemm_nn_acc(m, n, k, g.data(), b.data(), acc.data(), bacc.data());
    serial::gemm_tn(m, n, k, g.data(), a.data(), out.data());
    for (int i = 0; i < m; ++i) {
        double bs = 0.0;
        for (int j = 0; j < n; ++j) bs += g[i * n + j];
        ASSERT_NEAR(bacc[i], bs, 1e-12);
        for (int x = 0; x < k; ++x) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += g[i * n + j] * b[j * k + x];
            ASSERT_NEAR(acc[i * k + x], s, 1e-12);
        }
    }
    for (int j = 0; j < n; ++j)
        for (int x = 0; x < k; ++x) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += g[i * n + j] * a[i * k + x];
            ASSERT_NEAR(out[j * k + x], s, 1e-12);
        }
}

// Sizes above the parallel threshold so the OpenMP path actually splits.
TEST(Gemm, ParallelIsBitwiseEqualToSerial) {
    Rng rng(4);
    const int m = 256, n = 1, k = 1120;
    std::vector<float> a(m * k), b(n * k), bias(m), g(m * n), w(m * k);
    for (auto* v : {&a, &b, &bias, &g, &w})
        for (float& x : *v) x = static_cast<float>(2.0 * rng.uniform() - 1.0);
    std::vector<float> c1(m * n), c2(m * n);
    serial::gemm_nt(m, n, k, a.data(), b.data(), bias.data(), c1.data());
    parallel::gemm_nt(m, n, k, a.data(), b.data(), bias.data(), c2.data());
    EXPECT_EQ(c1, c2);

    std::vector<float> acc1(m * k, 0.5f), acc2(m * k, 0.5f), ba1(m, 0.0f), ba2(m, 0.0f);
    serial::gemm_nn_acc(m, n, k, g.data(), b.data(), acc1.data(), ba1.data());
    parallel::gemm_nn_acc(m, n, k, g.data(), b.data(), acc2.data(), ba2.data());
    EXPECT_EQ(acc1, acc2);
    EXPECT_EQ(ba1, ba2);

    std::vector<float> o1(n * k), o2(n * k);
    serial::gemm_tn(m, n, k, g.data(), w.data(), o1.data());
    parallel::gemm_tn(m, n, k, g.data(), w.data(), o2.data());
    EXPECT_EQ(o1, o2);
}

TEST(Gemm, ParallelConvLayerIsBitwiseEqual) {
    Rng rng(5);
    const ConvGeometry g{1, 64, 96, 16, 8, 4};
    std::vector<float> in(g.in_h * g.in_w), w(g.out_c * g.patch()), bias(g.out_c);
    for (auto* v : {&in, &w, &bias})
        for (float& x : *v) x = static_cast<float>(rng.uniform());
    std::vector<float> cols(static_cast<std::size_t>(g.positions()) * g.patch());
    im2col(g, in.data(), cols.data());
    std::vector<float> s(g.out_c * g.positions()), p(s.size());
    gemm_nt(Exec::Serial, g.out_c, g.positions(), g.patch(), w.data(), cols.data(), bias.data(), s.data());
    gemm_nt(Exec::Parallel, g.out_c, g.positions(), g.patch(), w.data(), cols.data(), bias.data(), p.data());
    EXPECT_EQ(s, p);
}
