#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sparseswin/gradcheck.hpp"
#include "sparseswin/ops.hpp"

using namespace sparseswin;
using F = Tensor<float>;
using D = Tensor<double>;

namespace {

// Plain six-loop convolution reference, accumulated in double.
D conv_ref(const D& x, const D& w, const D& bias, std::int64_t stride, std::int64_t pad) {
    const auto b = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const auto cout = w.dim(0), k = w.dim(2);
    const auto oh = (h + 2 * pad - k) / stride + 1;
    const auto ow = (wd + 2 * pad - k) / stride + 1;
    D out = D::zeros({b, cout, oh, ow});
    auto o = out.mutable_data();
    for (std::int64_t n = 0; n < b; ++n)
        for (std::int64_t co = 0; co < cout; ++co)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.data()[co];
                    for (std::int64_t ci = 0; ci < cin; ++ci)
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t iy = oy * stride + ky - pad;
                                const std::int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.data()[((n * cin + ci) * h + iy) * wd + ix] *
                                       w.data()[((co * cin + ci) * k + ky) * k + kx];
                            }
                    o[((n * cout + co) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

template <typename T>
void check_close(std::span<const T> a, std::span<const T> b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CAPTURE(i);
        CHECK(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) <= tol);
    }
}

} // namespace

TEST_CASE("factories, storage sharing, clone, cast") {
    F z = F::zeros({2, 3});
    CHECK(z.numel() == 6);
    for (float v : z.data()) CHECK(v == 0.0f);

    F f = F::full({2}, 1.5f);
    CHECK(f.data()[1] == 1.5f);

    CHECK_THROWS_AS(F::from({2, 2}, {1.0f, 2.0f}), ShapeError);

    F a = F::from({2}, {1.0f, 2.0f});
    F b = a; // copies share storage
    b.mutable_data()[0] = 9.0f;
    CHECK(a.data()[0] == 9.0f);

    F c = a.clone();
    c.mutable_data()[0] = -1.0f;
    CHECK(a.data()[0] == 9.0f);
    CHECK_FALSE(c.requires_grad());

    D d = a.cast<double>();
    CHECK(d.data()[0] == 9.0);

    CHECK(F::scalar(3.0f).item() == 3.0f);
    CHECK_THROWS_AS(a.item(), ShapeError);
}

TEST_CASE("rng streams are deterministic with sound distributions") {
    Rng r1(42), r2(42);
    for (int i = 0; i < 5; ++i) CHECK(r1.next_u64() == r2.next_u64());

    Rng u(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        const std::int64_t k = u.uniform_int(10);
        CHECK(k >= 0);
        CHECK(k < 10);
    }

    Rng n(11);
    double sum = 0, sq = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        const double v = n.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / draws) < 0.05);
    CHECK(std::abs(std::sqrt(sq / draws) - 1.0) < 0.05);

    Rng t(13);
    double spread = 0;
    for (int i = 0; i < 10000; ++i) {
        const double v = t.trunc_normal(0.02);
        CHECK(std::abs(v) <= 0.04);
        spread += v * v;
    }
    CHECK(spread > 0);

    CHECK(Rng::mix(1, 2) != Rng::mix(2, 1));
    Rng base(5);
    CHECK(base.fork(3).state() == base.fork(3).state());
    CHECK(base.fork(3).state() != base.fork(4).state());

    Rng s1(99), s2(99);
    F g1 = F::randn({4, 4}, s1);
    F g2 = F::randn({4, 4}, s2);
    for (std::int64_t i = 0; i < 16; ++i) CHECK(g1.data()[i] == g2.data()[i]);
}

TEST_CASE("matmul against hand results") {
    F a = F::from({2, 2}, {1, 2, 3, 4});
    F v = F::from({2, 1}, {0, 1});
    F out = matmul(a, v);
    CHECK(out.data()[0] == 2.0f);
    CHECK(out.data()[1] == 4.0f);

    F eye = F::from({2, 2}, {1, 0, 0, 1});
    F prod = matmul(eye, a);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(prod.data()[i] == a.data()[i]);

    // transpose_b: A [2,3] x B [2,3]^T
    F m = F::from({2, 3}, {1, 2, 3, 4, 5, 6});
    F n = F::from({2, 3}, {1, 0, 1, 0, 1, 0});
    F tb = matmul(m, n, /*transpose_b=*/true);
    CHECK(tb.dim(0) == 2);
    CHECK(tb.dim(1) == 2);
    CHECK(tb.data()[0] == 4.0f);  // 1+3
    CHECK(tb.data()[1] == 2.0f);  // 2
    CHECK(tb.data()[2] == 10.0f); // 4+6
    CHECK(tb.data()[3] == 5.0f);  // 5

    // batched lhs with independent rhs and with one shared rank-2 rhs
    Rng rng(3);
    F ba = F::randn({2, 3, 4}, rng);
    F bb = F::randn({2, 4, 5}, rng);
    F bc = matmul(ba, bb);
    for (std::int64_t batch = 0; batch < 2; ++batch) {
        F sa = F::from({3, 4}, std::vector<float>(ba.data().begin() + batch * 12,
                                                  ba.data().begin() + (batch + 1) * 12));
        F sb = F::from({4, 5}, std::vector<float>(bb.data().begin() + batch * 20,
                                                  bb.data().begin() + (batch + 1) * 20));
        F sc = matmul(sa, sb);
        for (std::int64_t i = 0; i < 15; ++i) CHECK(bc.data()[batch * 15 + i] == sc.data()[i]);
    }
    F shared = F::randn({4, 5}, rng);
    F sc = matmul(ba, shared);
    for (std::int64_t batch = 0; batch < 2; ++batch) {
        F sa = F::from({3, 4}, std::vector<float>(ba.data().begin() + batch * 12,
                                                  ba.data().begin() + (batch + 1) * 12));
        F one = matmul(sa, shared);
        for (std::int64_t i = 0; i < 15; ++i) CHECK(sc.data()[batch * 15 + i] == one.data()[i]);
    }

    CHECK_THROWS_AS(matmul(F::zeros({2, 3}), F::zeros({2, 3})), ShapeError);
}

TEST_CASE("conv2d equals the six-loop reference") {
    Rng rng(21);
    D x = D::randn({1, 2, 4, 4}, rng);
    D w = D::randn({3, 2, 3, 3}, rng);
    D b = D::randn({3}, rng);
    check_close<double>(conv2d(x, w, b, 1, 1).data(), conv_ref(x, w, b, 1, 1).data(), 1e-12);

    D x2 = D::randn({2, 3, 5, 5}, rng);
    D w2 = D::randn({4, 3, 3, 3}, rng);
    D b2 = D::randn({4}, rng);
    check_close<double>(conv2d(x2, w2, b2, 2, 0).data(), conv_ref(x2, w2, b2, 2, 0).data(), 1e-12);

    // 1x1 identity kernel passes channels through; zero kernel leaves bias.
    D xi = D::randn({1, 2, 3, 3}, rng);
    D wi = D::from({2, 2, 1, 1}, {1, 0, 0, 1});
    D zb = D::zeros({2});
    check_close<double>(conv2d(xi, wi, zb, 1, 0).data(), xi.data(), 0.0);
    D wz = D::zeros({2, 2, 1, 1});
    D bz = D::from({2}, {0.5, -0.25});
    D oz = conv2d(xi, wz, bz, 1, 0);
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t i = 0; i < 9; ++i) CHECK(oz.data()[c * 9 + i] == bz.data()[c]);
}

TEST_CASE("layer_norm normalizes rows and scales affinely") {
    Rng rng(31);
    D x = D::randn({3, 5}, rng);
    for (auto& v : x.mutable_data()) v = v * 3.0 + 1.0;
    D ones = D::full({5}, 1.0);
    D zeros = D::zeros({5});
    D y = layer_norm(x, ones, zeros, 1e-5);
    for (std::int64_t r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (std::int64_t c = 0; c < 5; ++c) mean += y.data()[r * 5 + c];
        mean /= 5;
        for (std::int64_t c = 0; c < 5; ++c) {
            const double d = y.data()[r * 5 + c] - mean;
            var += d * d;
        }
        var /= 5;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }

    D gain = D::from({5}, {2, -1, 0.5, 3, 1});
    D bias = D::from({5}, {1, 0, -2, 0.25, 5});
    D affine = layer_norm(x, gain, bias, 1e-5);
    for (std::int64_t i = 0; i < 15; ++i) {
        const double expect = y.data()[i] * gain.data()[i % 5] + bias.data()[i % 5];
        CHECK(std::abs(affine.data()[i] - expect) < 1e-12);
    }

    // finite-difference agreement on a 3x5 input
    D p = D::randn({3, 5}, rng);
    const double err = check_gradients<double>(
        {x, gain, bias},
        [=] { return scale(sum_all(mul(layer_norm(x, gain, bias, 1e-5), p)), 1.0 / 15.0); });
    CHECK(err < 1e-5);
}

TEST_CASE("softmax is stable and stochastic") {
    D u = softmax(D::zeros({1, 4}), -1);
    for (double v : u.data()) CHECK(std::abs(v - 0.25) < 1e-12);

    D extreme = softmax(D::from({1, 2}, {1000, 0}), -1);
    CHECK(extreme.data()[0] == doctest::Approx(1.0));
    CHECK(extreme.data()[1] == doctest::Approx(0.0));
    for (double v : extreme.data()) CHECK(std::isfinite(v));

    Rng rng(41);
    D x = D::randn({4, 7}, rng);
    D y = softmax(x, -1);
    for (std::int64_t r = 0; r < 4; ++r) {
        double total = 0;
        for (std::int64_t c = 0; c < 7; ++c) {
            total += y.data()[r * 7 + c];
            CHECK(y.data()[r * 7 + c] >= 0.0);
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    D p = D::randn({4, 7}, rng);
    const double err = check_gradients<double>(
        {x}, [=] { return scale(sum_all(mul(softmax(x, -1), p)), 1.0 / 28.0); });
    CHECK(err < 1e-5);
}

TEST_CASE("gelu matches the exact-erf definition and derivative") {
    CHECK(gelu(D::scalar(0.0)).item() == 0.0);
    auto phi = [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); };
    for (double v : {-3.0, -1.0, 0.5, 4.0}) {
        CHECK(gelu(D::scalar(v)).item() == doctest::Approx(v * phi(v)).epsilon(1e-12));
    }

    // derivative Phi(x) + x*phi(x) against central differences
    D x = D::from({4}, {-3.0, -1.0, 0.5, 4.0});
    D g = finite_diff_grad<double>([](const D& t) { return sum_all(gelu(t)); }, x);
    for (std::int64_t i = 0; i < 4; ++i) {
        const double v = x.data()[i];
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * 3.14159265358979323846);
        CHECK(std::abs(g.data()[i] - (phi(v) + v * pdf)) < 1e-6);
    }
}

TEST_CASE("cross_entropy values and invariances") {
    CHECK(cross_entropy(D::from({1, 2}, {0, 0}), {0}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(cross_entropy(D::from({1, 2}, {20, 0}), {0}).item() < 1e-6);

    Rng rng(51);
    D logits = D::randn({3, 5}, rng);
    const std::vector<std::int32_t> labels = {4, 0, 2};
    const double base = cross_entropy(logits, labels).item();
    D shifted = add_scalar(logits, 7.25);
    CHECK(cross_entropy(shifted, labels).item() == doctest::Approx(base).epsilon(1e-9));

    // batch mean of per-row losses
    double manual = 0;
    for (std::int64_t r = 0; r < 3; ++r) {
        D row = D::from({1, 5}, std::vector<double>(logits.data().begin() + r * 5,
                                                    logits.data().begin() + (r + 1) * 5));
        manual += cross_entropy(row, {labels[static_cast<std::size_t>(r)]}).item();
    }
    CHECK(base == doctest::Approx(manual / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(logits, {1, 2}), ShapeError);
    CHECK_THROWS_AS(cross_entropy(logits, {0, 1, 5}), DataError);
}

TEST_CASE("movement and elementwise ops") {
    F x = F::from({2, 2}, {1, 2, 3, 4});
    F y = F::from({2, 2}, {10, 20, 30, 40});
    CHECK(add(x, y).data()[3] == 44.0f);
    CHECK(sub(y, x).data()[0] == 9.0f);
    CHECK(mul(x, y).data()[1] == 40.0f);
    CHECK(scale(x, 2.0f).data()[2] == 6.0f);
    CHECK(add_scalar(x, 0.5f).data()[0] == 1.5f);
    CHECK(absval(F::from({2}, {-3, 4})).data()[0] == 3.0f);
    CHECK(sum_all(x).item() == 10.0f);

    F m = mean_axis(F::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), 1);
    CHECK(m.dim(0) == 2);
    CHECK(m.dim(1) == 2);
    CHECK(m.data()[0] == 2.0f); // mean(1, 3)
    CHECK(m.data()[3] == 7.0f); // mean(6, 8)

    CHECK_THROWS_AS(reshape(x, {3, 2}), ShapeError);

    Rng rng(61);
    F t = F::randn({2, 3, 4}, rng);
    F fwd = permute(t, {2, 0, 1});
    F back = permute(fwd, {1, 2, 0});
    for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(back.data()[i] == t.data()[i]);

    F grid = F::randn({2, 4, 4, 3}, rng);
    F rolled = roll2d(roll2d(grid, 1, -2), -1, 2);
    for (std::int64_t i = 0; i < grid.numel(); ++i) CHECK(rolled.data()[i] == grid.data()[i]);

    // roll moves content toward higher indices
    F tiny = F::from({1, 2, 2, 1}, {1, 2, 3, 4});
    F down = roll2d(tiny, 1, 0);
    CHECK(down.data()[0] == 3.0f);
    CHECK(down.data()[1] == 4.0f);
    CHECK(down.data()[2] == 1.0f);
    CHECK(down.data()[3] == 2.0f);

    F s = slice_last(F::from({2, 3}, {1, 2, 3, 4, 5, 6}), 1, 2);
    CHECK(s.dim(1) == 2);
    CHECK(s.data()[0] == 2.0f);
    CHECK(s.data()[3] == 6.0f);

    F biased = add_bias(F::zeros({2, 2, 3}), F::from({3}, {1, 2, 3}));
    CHECK(biased.data()[0] == 1.0f);
    CHECK(biased.data()[5] == 3.0f);
    CHECK(biased.data()[9] == 1.0f);

    // 2x2 neighborhood concat keeps row-major quadrant order
    F q = F::from({1, 2, 2, 1}, {1, 2, 3, 4});
    F merged = merge2x2(q);
    CHECK(merged.shape() == Shape{1, 1, 1, 4});
    CHECK(merged.data()[0] == 1.0f);
    CHECK(merged.data()[1] == 2.0f);
    CHECK(merged.data()[2] == 3.0f);
    CHECK(merged.data()[3] == 4.0f);

    const auto picks = argmax_rows(F::from({2, 3}, {1, 3, 2, 5, 5, 4}));
    CHECK(picks[0] == 1);
    CHECK(picks[1] == 0); // ties resolve to the first index
}

TEST_CASE("tape mechanics: accumulation, reuse, errors, tracking") {
    F x = F::from({3}, {1, 2, 3}).set_requires_grad(true);

    {
        Graph<float> g;
        Graph<float>::Scope scope(g);
        g.backward(sum_all(x));
        const auto grad = x.grad();
        for (float v : grad) CHECK(v == 1.0f);
    }
    x.drop_grad();

    {
        Graph<float> g;
        Graph<float>::Scope scope(g);
        g.backward(sum_all(mul(x, x)));
        for (std::int64_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0f * x.data()[i]);
        CHECK_THROWS_AS(g.backward(sum_all(x)), ShapeError); // consumed
    }
    x.drop_grad();

    {
        Graph<float> g;
        Graph<float>::Scope scope(g);
        // two uses of x accumulate
        g.backward(sum_all(add(x, x)));
        for (float v : x.grad()) CHECK(v == 2.0f);
        x.drop_grad();
    }

    {
        Graph<float> g;
        Graph<float>::Scope scope(g);
        CHECK_THROWS_AS(g.backward(mul(x, x)), ShapeError); // non-scalar
    }

    {
        Graph<float> g;
        CHECK_THROWS_AS(g.backward(F::scalar(1.0f)), ShapeError); // detached constant
    }

    {
        // untracked inputs are not recorded at all
        F plain = F::from({2}, {1, 2});
        Graph<float> g;
        Graph<float>::Scope scope(g);
        auto out = mul(plain, plain);
        CHECK(g.size() == 0);
        CHECK_FALSE(tracked(out));
    }

    {
        // frozen input gets no gradient, trainable one does
        F frozen = F::from({2, 2}, {1, 0, 0, 1});
        F weight = F::from({2, 2}, {1, 2, 3, 4}).set_requires_grad(true);
        Graph<float> g;
        Graph<float>::Scope scope(g);
        g.backward(sum_all(matmul(frozen, weight)));
        CHECK(weight.has_grad());
        CHECK_FALSE(frozen.has_grad());
        weight.drop_grad();
    }

    {
        F big = F::full({1}, 1e30f).set_requires_grad(true);
        Graph<float> g;
        Graph<float>::Scope scope(g);
        auto blown = mul(big, big); // overflows to inf
        CHECK(g.first_nonfinite().find("mul") != std::string::npos);
        (void)blown;
    }
}

TEST_CASE("finite_diff_grad examples and rel-err floor") {
    D x = D::from({2, 2}, {1, -2, 0.5, 3});
    D ones = finite_diff_grad<double>([](const D& t) { return sum_all(t); }, x);
    for (double v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    D three = D::scalar(3.0);
    D six = finite_diff_grad<double>([](const D& t) { return sum_all(mul(t, t)); }, three);
    CHECK(six.item() == doctest::Approx(6.0).epsilon(1e-7));

    CHECK(grad_rel_err(1.0, 1.0 + 1e-7) == doctest::Approx(1e-7).epsilon(1e-3));
    CHECK(grad_rel_err(0.0, 5e-7) == doctest::Approx(0.5));
    CHECK(grad_rel_err(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("composite backward agrees with finite differences") {
    Rng rng(71);
    D x = D::randn({3, 4}, rng);
    D w = D::randn({4, 2}, rng);
    D p = D::randn({3, 2}, rng);
    const double err = check_gradients<double>(
        {x, w}, [=] { return scale(sum_all(mul(matmul(gelu(x), w), p)), 1.0 / 6.0); });
    CHECK(err < 1e-4);
}
