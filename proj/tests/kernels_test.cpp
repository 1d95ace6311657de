#include <omp.h>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "laf/image.hpp"
#include "laf/kernels.hpp"
#include "laf/ref_kernels.hpp"

using namespace laf;
using kernels::ConvShape;

namespace {

Tensor4 random_tensor(Rng& rng, int n, int c, int h, int w) {
    Tensor4 t(n, c, h, w);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("gemm matches reference on random shapes") {
    Rng rng(11);
    for (int iter = 0; iter < 20; ++iter) {
        int m = 1 + static_cast<int>(rng.uniform_int(24));
        int n = 1 + static_cast<int>(rng.uniform_int(24));
        int k = 1 + static_cast<int>(rng.uniform_int(24));
        bool ta = rng.uniform() < 0.5, tb = rng.uniform() < 0.5;
        auto a = random_vec(rng, static_cast<size_t>(m) * k);
        auto b = random_vec(rng, static_cast<size_t>(k) * n);
        std::vector<double> c0(static_cast<size_t>(m) * n, 0.5), c1 = c0;
        int lda = ta ? m : k, ldb = tb ? k : n;
        ref::gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, 0.7, c0.data(), n);
        kernels::gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, 0.7, c1.data(), n);
        CHECK(max_abs_diff(c0, c1) < 1e-10);
    }
}

TEST_CASE("conv2d forward matches reference") {
    Rng rng(22);
    for (int iter = 0; iter < 8; ++iter) {
        int n = 1 + static_cast<int>(rng.uniform_int(3));
        int ci = 1 + static_cast<int>(rng.uniform_int(4));
        int co = 1 + static_cast<int>(rng.uniform_int(6));
        int h = 4 + static_cast<int>(rng.uniform_int(10));
        int w = 4 + static_cast<int>(rng.uniform_int(10));
        ConvShape sh{co, ci, 3, 1 + static_cast<int>(rng.uniform_int(2)), 1};
        auto in = random_tensor(rng, n, ci, h, w);
        auto wts = random_vec(rng, static_cast<size_t>(co) * ci * 9);
        auto bias = random_vec(rng, co);
        Tensor4 out_ref, out_opt;
        ref::conv2d_forward(in, wts, &bias, sh, out_ref);
        kernels::conv2d_forward(in, wts, &bias, sh, out_opt);
        REQUIRE(out_ref.size() == out_opt.size());
        CHECK(max_abs_diff(out_ref.data, out_opt.data) < 1e-10);
    }
}

TEST_CASE("conv2d output shape follows stride arithmetic") {
    // (in + 2*pad - kernel) / stride + 1
    CHECK(kernels::conv_out_extent(256, 3, 2, 1) == 128);
    CHECK(kernels::conv_out_extent(128, 3, 1, 1) == 128);
    CHECK(kernels::conv_out_extent(5, 3, 2, 1) == 3);
    Rng rng(3);
    auto in = random_tensor(rng, 2, 3, 17, 13);
    ConvShape sh{4, 3, 3, 2, 1};
    Tensor4 out;
    kernels::conv2d_forward(in, random_vec(rng, 4 * 3 * 9), nullptr, sh, out);
    CHECK(out.height == (17 + 2 - 3) / 2 + 1);
    CHECK(out.width == (13 + 2 - 3) / 2 + 1);
}

TEST_CASE("conv2d backward matches reference") {
    Rng rng(33);
    for (int iter = 0; iter < 6; ++iter) {
        int n = 1 + static_cast<int>(rng.uniform_int(3));
        int ci = 1 + static_cast<int>(rng.uniform_int(3));
        int co = 1 + static_cast<int>(rng.uniform_int(4));
        int h = 4 + static_cast<int>(rng.uniform_int(8));
        int w = 4 + static_cast<int>(rng.uniform_int(8));
        ConvShape sh{co, ci, 3, 1 + static_cast<int>(rng.uniform_int(2)), 1};
        auto in = random_tensor(rng, n, ci, h, w);
        auto wts = random_vec(rng, static_cast<size_t>(co) * ci * 9);
        Tensor4 out;
        ref::conv2d_forward(in, wts, nullptr, sh, out);
        Tensor4 d_out = random_tensor(rng, n, co, out.height, out.width);
        Tensor4 di_ref, di_opt;
        std::vector<double> dw_ref, dw_opt, db_ref, db_opt;
        ref::conv2d_backward(in, wts, sh, d_out, di_ref, dw_ref, &db_ref);
        kernels::conv2d_backward(in, wts, sh, d_out, di_opt, dw_opt, &db_opt);
        CHECK(max_abs_diff(di_ref.data, di_opt.data) < 1e-9);
        CHECK(max_abs_diff(dw_ref, dw_opt) < 1e-9);
        CHECK(max_abs_diff(db_ref, db_opt) < 1e-9);
    }
}

TEST_CASE("conv2d forward+backward identical across thread counts") {
    Rng rng(44);
    auto in = random_tensor(rng, 5, 3, 12, 12);
    ConvShape sh{6, 3, 3, 1, 1};
    auto wts = random_vec(rng, 6 * 3 * 9);
    Tensor4 d_out = random_tensor(rng, 5, 6, 12, 12);

    auto run = [&](int threads, Tensor4& out, Tensor4& d_in, std::vector<double>& d_w) {
        int saved = omp_get_max_threads();
        omp_set_num_threads(threads);
        kernels::conv2d_forward(in, wts, nullptr, sh, out);
        kernels::conv2d_backward(in, wts, sh, d_out, d_in, d_w, nullptr);
        omp_set_num_threads(saved);
    };
    Tensor4 o1, o4, di1, di4;
    std::vector<double> dw1, dw4;
    run(1, o1, di1, dw1);
    run(4, o4, di4, dw4);
    CHECK(o1.data == o4.data);
    CHECK(di1.data == di4.data);
    CHECK(dw1 == dw4);
}

TEST_CASE("batch norm train forward matches reference and is thread invariant") {
    Rng rng(55);
    auto in = random_tensor(rng, 4, 5, 7, 9);
    auto gamma = random_vec(rng, 5);
    auto beta = random_vec(rng, 5);
    Tensor4 out_ref, xhat_ref, out_opt, xhat_opt;
    std::vector<double> m_ref, v_ref, m_opt, v_opt;
    ref::bn_forward_train(in, gamma, beta, 1e-5, out_ref, xhat_ref, m_ref, v_ref);
    kernels::bn_forward_train(in, gamma, beta, 1e-5, out_opt, xhat_opt, m_opt, v_opt);
    CHECK(max_abs_diff(out_ref.data, out_opt.data) < 1e-9);
    CHECK(max_abs_diff(m_ref, m_opt) < 1e-10);
    CHECK(max_abs_diff(v_ref, v_opt) < 1e-10);

    // Per-channel mean of normalized output is 0, population variance 1.
    size_t plane = static_cast<size_t>(7) * 9;
    for (int c = 0; c < 5; ++c) {
        double s = 0, s2 = 0;
        for (int n = 0; n < 4; ++n)
            for (size_t i = 0; i < plane; ++i) {
                double x = xhat_opt.item(n)[c * plane + i];
                s += x;
                s2 += x * x;
            }
        double cnt = 4.0 * plane;
        CHECK(std::abs(s / cnt) < 1e-10);
        CHECK(std::abs(s2 / cnt - 1.0) < 1e-3);  // eps shifts variance slightly below 1
    }

    int saved = omp_get_max_threads();
    omp_set_num_threads(3);
    Tensor4 out3, xhat3;
    std::vector<double> m3, v3;
    kernels::bn_forward_train(in, gamma, beta, 1e-5, out3, xhat3, m3, v3);
    omp_set_num_threads(saved);
    CHECK(out3.data == out_opt.data);
    CHECK(m3 == m_opt);
}

TEST_CASE("batch norm backward matches reference") {
    Rng rng(66);
    auto in = random_tensor(rng, 3, 4, 6, 5);
    auto gamma = random_vec(rng, 4);
    auto beta = random_vec(rng, 4);
    Tensor4 out, xhat;
    std::vector<double> mean, var;
    kernels::bn_forward_train(in, gamma, beta, 1e-5, out, xhat, mean, var);
    std::vector<double> inv_std(4);
    for (int c = 0; c < 4; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + 1e-5);
    Tensor4 d_out = random_tensor(rng, 3, 4, 6, 5);
    Tensor4 di_ref, di_opt;
    std::vector<double> dg_ref, db_ref, dg_opt, db_opt;
    ref::bn_backward(xhat, gamma, inv_std, d_out, di_ref, dg_ref, db_ref);
    kernels::bn_backward(xhat, gamma, inv_std, d_out, di_opt, dg_opt, db_opt);
    CHECK(max_abs_diff(di_ref.data, di_opt.data) < 1e-9);
    CHECK(max_abs_diff(dg_ref, dg_opt) < 1e-10);
    CHECK(max_abs_diff(db_ref, db_opt) < 1e-10);
}

TEST_CASE("batch norm eval uses running statistics") {
    Tensor4 in(1, 1, 1, 3);
    in.data = {1.0, 2.0, 3.0};
    std::vector<double> gamma{2.0}, beta{0.5}, rm{1.0}, rv{4.0};
    Tensor4 out;
    kernels::bn_forward_eval(in, gamma, beta, rm, rv, 0.0, out);
    // (x - 1) / 2 * 2 + 0.5
    CHECK(out.data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.data[1] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out.data[2] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("average pool handles ceil mode partial windows") {
    // 5 wide, window 2: extents ceil(5/2) = 3, last window has a single column.
    Tensor4 in(1, 1, 1, 5);
    in.data = {1, 2, 3, 4, 10};
    Tensor4 out;
    kernels::avgpool_forward(in, 2, out);
    REQUIRE(out.width == 3);
    CHECK(out.data[0] == doctest::Approx(1.5));
    CHECK(out.data[1] == doctest::Approx(3.5));
    CHECK(out.data[2] == doctest::Approx(10.0));

    Tensor4 d_out(1, 1, 1, 3);
    d_out.data = {3, 5, 7};
    Tensor4 d_in;
    kernels::avgpool_backward(1, 5, 2, d_out, d_in);
    CHECK(d_in.data == std::vector<double>{1.5, 1.5, 2.5, 2.5, 7.0});
}

TEST_CASE("average pool matches reference on random shapes") {
    Rng rng(77);
    for (int iter = 0; iter < 6; ++iter) {
        int h = 3 + static_cast<int>(rng.uniform_int(14));
        int w = 3 + static_cast<int>(rng.uniform_int(14));
        int window = 1 + static_cast<int>(rng.uniform_int(5));
        auto in = random_tensor(rng, 2, 3, h, w);
        Tensor4 o_ref, o_opt;
        ref::avgpool_forward(in, window, o_ref);
        kernels::avgpool_forward(in, window, o_opt);
        CHECK(max_abs_diff(o_ref.data, o_opt.data) < 1e-12);
        Tensor4 d_out = random_tensor(rng, 2, 3, o_ref.height, o_ref.width);
        Tensor4 di_ref, di_opt;
        ref::avgpool_backward(h, w, window, d_out, di_ref);
        kernels::avgpool_backward(h, w, window, d_out, di_opt);
        CHECK(max_abs_diff(di_ref.data, di_opt.data) < 1e-12);
    }
}

TEST_CASE("fully connected forward and backward match reference") {
    Rng rng(88);
    int n = 7, d_in = 13, d_out = 5;
    auto x = random_vec(rng, static_cast<size_t>(n) * d_in);
    auto w = random_vec(rng, static_cast<size_t>(d_out) * d_in);
    auto b = random_vec(rng, d_out);
    std::vector<double> y_ref(static_cast<size_t>(n) * d_out), y_opt = y_ref;
    ref::fc_forward(x.data(), n, d_in, w, b, d_out, y_ref.data());
    kernels::fc_forward(x.data(), n, d_in, w, b, d_out, y_opt.data());
    CHECK(max_abs_diff(y_ref, y_opt) < 1e-10);

    auto d_y = random_vec(rng, static_cast<size_t>(n) * d_out);
    std::vector<double> dx_ref(x.size()), dx_opt(x.size()), dw_ref, dw_opt, db_ref, db_opt;
    ref::fc_backward(x.data(), n, d_in, w, d_out, d_y.data(), dx_ref.data(), dw_ref, db_ref);
    kernels::fc_backward(x.data(), n, d_in, w, d_out, d_y.data(), dx_opt.data(), dw_opt, db_opt);
    CHECK(max_abs_diff(dx_ref, dx_opt) < 1e-10);
    CHECK(max_abs_diff(dw_ref, dw_opt) < 1e-10);
    CHECK(max_abs_diff(db_ref, db_opt) < 1e-10);
}

TEST_CASE("relu forward and backward") {
    std::vector<double> x{-1.0, 0.0, 2.5};
    std::vector<double> y(3);
    kernels::relu_forward(x.data(), 3, y.data());
    CHECK(y == std::vector<double>{0.0, 0.0, 2.5});
    std::vector<double> dy{1.0, 1.0, 1.0}, dx(3);
    kernels::relu_backward(y.data(), dy.data(), 3, dx.data());
    CHECK(dx == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("adam step matches hand computed values") {
    // Single parameter, g = 0.5, lr = 0.1, default betas.
    std::vector<double> p{1.0};
    std::vector<double> g{0.5};
    kernels::AdamState st;
    kernels::adam_step(p, g, st, 1, 0.1, 0.9, 0.999, 1e-8);
    // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25; step = 0.1 * 0.5 / (0.5 + 1e-8)
    double expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sgd momentum step") {
    std::vector<double> p{1.0}, g{0.5}, vel;
    kernels::sgd_momentum_step(p, g, vel, 0.1, 0.9);
    CHECK(p[0] == doctest::Approx(0.95));
    kernels::sgd_momentum_step(p, g, vel, 0.1, 0.9);
    // velocity = 0.9*0.5 + 0.5 = 0.95
    CHECK(p[0] == doctest::Approx(0.95 - 0.095));
}

TEST_CASE("rng uniform is deterministic and in range") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    Rng c(124);
    bool any_diff = false;
    Rng a2(123);
    for (int i = 0; i < 10; ++i) any_diff |= (a2.uniform() != c.uniform());
    CHECK(any_diff);
}

TEST_CASE("rng normal has sane moments") {
    Rng rng(9);
    double s = 0, s2 = 0;
    int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("bilinear plane upsample preserves constants and is monotone on ramps") {
    std::vector<double> src(4 * 4, 0.7);
    std::vector<double> dst(16 * 16);
    kernels::upsample_plane_bilinear(src.data(), 4, 4, dst.data(), 16, 16);
    for (double v : dst) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) src[y * 4 + x] = x;
    kernels::upsample_plane_bilinear(src.data(), 4, 4, dst.data(), 16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 1; x < 16; ++x) CHECK(dst[y * 16 + x] >= dst[y * 16 + x - 1] - 1e-12);
}

TEST_CASE("affine warp of identity returns image, inverse composes to identity") {
    Rng rng(10);
    Image img(8, 9, 3);
    for (auto& v : img.data) v = rng.uniform();
    Affine id;
    Image same = warp_affine(img, id, 8, 9);
    double m = 0;
    for (size_t i = 0; i < img.data.size(); ++i) m = std::max(m, std::abs(img.data[i] - same.data[i]));
    CHECK(m < 1e-12);

    Affine t;
    t.a = 1.5; t.b = 0.2; t.tx = 3.0; t.c = -0.1; t.d = 0.9; t.ty = -2.0;
    Affine comp = t.compose(t.inverse());
    CHECK(comp.a == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(comp.d == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(comp.b) < 1e-9);
    CHECK(std::abs(comp.c) < 1e-9);
    CHECK(std::abs(comp.tx) < 1e-9);
    CHECK(std::abs(comp.ty) < 1e-9);
}

TEST_CASE("hsv round trip") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
        double h, s, v, r2, g2, b2;
        rgb_to_hsv(r, g, b, h, s, v);
        hsv_to_rgb(h, s, v, r2, g2, b2);
        CHECK(std::abs(r - r2) < 1e-9);
        CHECK(std::abs(g - g2) < 1e-9);
        CHECK(std::abs(b - b2) < 1e-9);
    }
}

TEST_CASE("png round trip preserves quantized pixels") {
    Rng rng(13);
    Image img(20, 17, 3);
    for (auto& v : img.data) v = rng.uniform();
    std::string path = "/tmp/laf_test_roundtrip.png";
    write_png(path, img);
    Image back = read_png(path);
    REQUIRE(back.height == 20);
    REQUIRE(back.width == 17);
    REQUIRE(back.channels == 3);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(quantize8(img.data[i]) / 255.0).epsilon(1e-12));
}

TEST_CASE("png write is byte stable for identical pixels") {
    Rng rng(14);
    Image img(16, 16, 3);
    for (auto& v : img.data) v = rng.uniform();
    write_png("/tmp/laf_test_a.png", img);
    write_png("/tmp/laf_test_b.png", img);
    CHECK(read_file("/tmp/laf_test_a.png") == read_file("/tmp/laf_test_b.png"));
}
