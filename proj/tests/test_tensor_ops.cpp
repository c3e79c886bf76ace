#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tma/autodiff.hpp"

using namespace tma;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double amp = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> dist(-amp, amp);
    for (double& v : t.data) v = dist(rng);
    return t;
}

// independent triple-loop oracle
Tensor matmul_naive(const Tensor& a, const Tensor& b) {
    const int p = a.shape[0], q = a.shape[1], r = b.shape[1];
    Tensor c = Tensor::zeros({p, r});
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < r; ++j) {
            double s = 0.0;
            for (int k = 0; k < q; ++k)
                s += a.data[static_cast<std::size_t>(i) * q + k] * b.data[static_cast<std::size_t>(k) * r + j];
            c.data[static_cast<std::size_t>(i) * r + j] = s;
        }
    return c;
}

// direct nested-loop convolution oracle
Tensor conv2d_naive(const Tensor& in, const Tensor& ker, const Tensor& bias, int stride, int pad) {
    const int ci = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int co = ker.shape[0], k = ker.shape[2];
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    Tensor out = Tensor::zeros({co, ho, wo});
    for (int oc = 0; oc < co; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double s = bias.data[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < ci; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            s += in.at({ic, iy, ix}) * ker.at({oc, ic, ky, kx});
                        }
                out.at({oc, oy, ox}) = s;
            }
    return out;
}

}  // namespace

TEST_CASE("matmul identity and hand expansion") {
    Tape t;
    VarId eye = t.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    VarId m = t.constant(Tensor({2, 2}, {3, 4, 5, 6}));
    const Tensor& out = t.value(matmul(t, eye, m));
    CHECK(out.data == std::vector<double>{3, 4, 5, 6});

    VarId a = t.constant(Tensor({1, 2}, {1, 2}));
    VarId b = t.constant(Tensor({2, 1}, {3, 4}));
    CHECK(t.value(matmul(t, a, b)).data[0] == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul matches triple-loop oracle on all shapes up to 8x8x8") {
    std::mt19937_64 rng(42);
    for (int p = 1; p <= 8; ++p)
        for (int q = 1; q <= 8; ++q)
            for (int r = 1; r <= 8; ++r) {
                Tensor a = random_tensor({p, q}, rng);
                Tensor b = random_tensor({q, r}, rng);
                Tape t;
                const Tensor& got = t.value(matmul(t, t.constant(a), t.constant(b)));
                Tensor want = matmul_naive(a, b);
                for (std::size_t i = 0; i < want.data.size(); ++i)
                    CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
            }
}

TEST_CASE("matmul dimension mismatch names both shapes") {
    Tape t;
    VarId a = t.constant(Tensor::zeros({2, 3}));
    VarId b = t.constant(Tensor::zeros({4, 2}));
    CHECK_THROWS_WITH_AS(matmul(t, a, b), doctest::Contains("[2x3]"), ShapeError);
    try {
        matmul(t, a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("conv2d 1x1 identity kernel is the identity map") {
    std::mt19937_64 rng(1);
    Tensor in = random_tensor({1, 5, 5}, rng);
    Tape t;
    VarId out = conv2d(t, t.constant(in), t.constant(Tensor({1, 1, 1, 1}, {1.0})),
                       t.constant(Tensor::zeros({1})), 1, 0);
    CHECK(t.value(out).data == in.data);
}

TEST_CASE("conv2d all-ones kernel on constant input: interior 9, corners 4") {
    Tape t;
    VarId out = conv2d(t, t.constant(Tensor::full({1, 6, 6}, 1.0)),
                       t.constant(Tensor::full({1, 1, 3, 3}, 1.0)), t.constant(Tensor::zeros({1})), 1, 1);
    const Tensor& o = t.value(out);
    CHECK(o.at({0, 3, 3}) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(o.at({0, 0, 0}) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(o.at({0, 0, 5}) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(o.at({0, 0, 3}) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("conv2d shape formula: 16x16, k=3, stride 2, pad 1 -> 8x8") {
    Tape t;
    std::mt19937_64 rng(2);
    VarId out = conv2d(t, t.constant(random_tensor({2, 16, 16}, rng)),
                       t.constant(random_tensor({4, 2, 3, 3}, rng)), t.constant(Tensor::zeros({4})), 2, 1);
    CHECK(t.value(out).shape == std::vector<int>{4, 8, 8});
}

TEST_CASE("conv2d rejects nonpositive output extent") {
    Tape t;
    VarId in = t.constant(Tensor::zeros({1, 2, 2}));
    VarId k = t.constant(Tensor::zeros({1, 1, 3, 3}));
    VarId b = t.constant(Tensor::zeros({1}));
    CHECK_THROWS_AS(conv2d(t, in, k, b, 2, 0), ShapeError);
}

TEST_CASE("conv2d matches naive loops on shapes up to 8") {
    std::mt19937_64 rng(7);
    for (int hw : {3, 5, 8})
        for (int k : {1, 3})
            for (int stride : {1, 2})
                for (int pad : {0, 1}) {
                    if (hw + 2 * pad < k) continue;
                    Tensor in = random_tensor({2, hw, hw}, rng);
                    Tensor ker = random_tensor({3, 2, k, k}, rng);
                    Tensor bias = random_tensor({3}, rng);
                    Tape t;
                    const Tensor& got =
                        t.value(conv2d(t, t.constant(in), t.constant(ker), t.constant(bias), stride, pad));
                    Tensor want = conv2d_naive(in, ker, bias, stride, pad);
                    REQUIRE(got.shape == want.shape);
                    for (std::size_t i = 0; i < want.data.size(); ++i)
                        CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
                }
}

TEST_CASE("softmax_rows basics") {
    Tape t;
    const Tensor& s1 = t.value(softmax_rows(t, t.constant(Tensor({1, 2}, {0, 0}))));
    CHECK(s1.data[0] == doctest::Approx(0.5).epsilon(1e-15));

    const Tensor& s2 = t.value(softmax_rows(t, t.constant(Tensor::full({1, 5}, 3.7))));
    for (double v : s2.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));

    const Tensor& s3 = t.value(softmax_rows(t, t.constant(Tensor({1, 2}, {std::log(2.0), 0.0}))));
    CHECK(s3.data[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(s3.data[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax_rows rows sum to 1 and entries lie in [0,1]") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        Tape t;
        const Tensor& s = t.value(softmax_rows(t, t.constant(random_tensor({6, 9}, rng, 30.0))));
        for (int i = 0; i < 6; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 9; ++j) {
                const double v = s.at({i, j});
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("concat_channels layout and slices") {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({2, 4, 4}, rng);
    Tensor b = random_tensor({3, 4, 4}, rng);
    Tape t;
    const Tensor& c = t.value(concat_channels(t, t.constant(a), t.constant(b)));
    CHECK(c.shape == std::vector<int>{5, 4, 4});
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(c.data[i] == a.data[i]);
    for (std::size_t i = 0; i < b.data.size(); ++i) CHECK(c.data[a.data.size() + i] == b.data[i]);

    VarId bad = t.constant(Tensor::zeros({1, 3, 4}));
    CHECK_THROWS_AS(concat_channels(t, t.constant(a), bad), ShapeError);
}

TEST_CASE("concat_channels backward splits an all-ones gradient") {
    Tape t;
    VarId a = t.constant(Tensor::full({2, 2, 2}, 0.3));
    VarId b = t.constant(Tensor::full({1, 2, 2}, -0.7));
    t.backward(sum_all(t, concat_channels(t, a, b)));
    for (double g : t.grad(a).data) CHECK(g == 1.0);
    for (double g : t.grad(b).data) CHECK(g == 1.0);
}

TEST_CASE("reshape_permute identity, memory layout, and exhaustive round-trip") {
    std::mt19937_64 rng(4);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tape t;
    VarId v = t.constant(x);

    // identity permutation is bitwise equal
    CHECK(t.value(permute(t, v, {0, 1, 2})).data == x.data);

    // T=2, C=3, h=w=1 memory value -> M_V with M=2 rows, 3 columns
    Tensor mv = random_tensor({2, 3, 1, 1}, rng);
    const Tensor& r = t.value(reshape_permute(t, t.constant(mv), {0, 2, 3, 1}, {2, 3}));
    CHECK(r.shape == std::vector<int>{2, 3});
    CHECK(r.at({0, 0}) == mv.at({0, 0, 0, 0}));
    CHECK(r.at({1, 2}) == mv.at({1, 2, 0, 0}));

    // round-trip through the inverse permutation is exact
    VarId fwd = permute(t, v, {2, 0, 1});
    VarId back = permute(t, fwd, {1, 2, 0});
    CHECK(t.value(back).data == x.data);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k) CHECK(t.value(fwd).at({k, i, j}) == x.at({i, j, k}));
}

TEST_CASE("reshape_permute rejects count mismatch and invalid permutations") {
    Tape t;
    VarId v = t.constant(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS(reshape(t, v, {4, 2}), ShapeError);
    CHECK_THROWS_AS(permute(t, v, {0, 0}), ShapeError);
    CHECK_THROWS_AS(permute(t, v, {0, 2}), ShapeError);
}

TEST_CASE("upsample_bilinear with matching extents is the identity") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({3, 4, 5}, rng);
    Tape t;
    CHECK(t.value(upsample_bilinear(t, t.constant(x), 4, 5)).data == x.data);
}

TEST_CASE("cross_entropy values") {
    Tape t;
    // uniform logits, C=4 -> ln 4
    VarId u = cross_entropy(t, t.constant(Tensor::zeros({4, 2, 2})), {0, 1, 2, 3});
    CHECK(t.value(u).data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // huge correct-class margin -> loss ~ 0
    Tensor strong = Tensor::zeros({3, 1, 1});
    strong.at({1, 0, 0}) = 100.0;
    VarId s = cross_entropy(t, t.constant(strong), {1});
    CHECK(t.value(s).data[0] < 1e-10);

    // all pixels ignored -> explicit empty-loss error
    CHECK_THROWS_WITH_AS(cross_entropy(t, t.constant(Tensor::zeros({2, 1, 2})), {255, 255}),
                         doctest::Contains("empty loss"), ContractError);

    // out-of-range label
    CHECK_THROWS_AS(cross_entropy(t, t.constant(Tensor::zeros({2, 1, 1})), {7}), ContractError);
}

TEST_CASE("ops keep finite inputs finite") {
    std::mt19937_64 rng(6);
    Tape t;
    VarId x = t.constant(random_tensor({4, 6}, rng, 500.0));  // large logits
    CHECK(t.value(softmax_rows(t, x)).all_finite());
    VarId y = t.constant(random_tensor({2, 8, 8}, rng, 100.0));
    VarId k = t.constant(random_tensor({3, 2, 3, 3}, rng, 100.0));
    CHECK(t.value(conv2d(t, y, k, t.constant(Tensor::zeros({3})), 1, 1)).all_finite());
}
