#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "attention.hpp"
#include "naive_attention.hpp"
#include "rng.hpp"
#include "text.hpp"

using namespace cacgen;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data) v = scale * rng.uniform(-1.0, 1.0);
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double d = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::fabs(a.data[i] - b.data[i]));
    return d;
}

// the scalar setup of the worked example: one pixel, two tokens, identity
// output projection, K = [1,0], V = [2,4]
AttentionLayerParams scalar_params() {
    AttentionLayerParams p;
    p.heads = 1;
    p.query_dim = 1;
    p.value_dim = 1;
    p.model_dim = 1;
    p.wq = {Matrix::identity(1)};
    Matrix wk(2, 1), wv(2, 1);
    wk.at(0, 0) = 1.0;
    wv.at(1, 0) = 1.0;
    p.wk = {wk};
    p.wv = {wv};
    p.wo = Matrix::identity(1);
    return p;
}

Matrix scalar_embed() {
    Matrix e(2, 2);
    e.at(0, 0) = 1.0;
    e.at(0, 1) = 2.0;
    e.at(1, 0) = 0.0;
    e.at(1, 1) = 4.0;
    return e;  // K = [1,0], V = [2,4]
}

ConcatenatedPrompt trivial_prompt(int n, double lam = 1.0) {
    ConcatenatedPrompt cp;
    cp.tokens.assign(size_t(n), 3);  // any non-special id
    cp.segments = {{0, n}};
    cp.lambdas.assign(size_t(n), lam);
    return cp;
}

AttentionLayerParams random_params(Rng& rng, int heads, int model_dim, int kv_dim, int d,
                                   int dv) {
    return AttentionLayerParams::seeded(rng.next_u64(), heads, model_dim, kv_dim, d, dv);
}

}  // namespace

TEST_CASE("baseline: single key gets weight one") {
    Rng rng(1);
    auto p = random_params(rng, 1, 3, 4, 2, 2);
    Matrix z = random_matrix(rng, 1, 3);
    Matrix e = random_matrix(rng, 1, 4);
    auto out = cross_attention_baseline(z, e, p);
    CHECK(out.record.maps[0].at(0, 0) == 1.0);
}

TEST_CASE("baseline: identical key rows share attention equally") {
    Rng rng(2);
    auto p = random_params(rng, 2, 3, 4, 2, 2);
    Matrix z = random_matrix(rng, 2, 3);
    Matrix e(2, 4);
    for (int c = 0; c < 4; ++c) e.at(0, c) = e.at(1, c) = rng.uniform(-1, 1);
    auto out = cross_attention_baseline(z, e, p);
    for (const auto& m : out.record.maps)
        for (int j = 0; j < m.rows; ++j) CHECK(m.at(j, 0) == doctest::Approx(m.at(j, 1)));
}

TEST_CASE("baseline: scalar worked example") {
    auto p = scalar_params();
    Matrix z(1, 1, 1.0);
    auto out = cross_attention_baseline(z, scalar_embed(), p);
    const double e = std::exp(1.0);
    CHECK(out.record.maps[0].at(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(out.record.maps[0].at(0, 1) == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
    CHECK(out.z_out.at(0, 0) == doctest::Approx((2 * e + 4) / (e + 1)).epsilon(1e-12));
}

TEST_CASE("cac: scalar worked example with a masked token") {
    auto p = scalar_params();
    Matrix z(1, 1, 1.0);
    ConcatMask mask;
    mask.matrix = Matrix(1, 2);
    mask.matrix.at(0, 0) = 1.0;
    auto out = cac_cross_attention(z, trivial_prompt(2), scalar_embed(), mask, p);
    const double e = std::exp(1.0);
    CHECK(out.record.maps[0].at(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(out.record.maps[0].at(0, 1) == 0.0);
    CHECK(out.z_out.at(0, 0) == doctest::Approx(2 * e / (e + 1)).epsilon(1e-12));
}

TEST_CASE("cac: all-ones mask with unit lambda reduces to baseline bit-exactly") {
    Rng rng(3);
    for (int it = 0; it < 10; ++it) {
        auto p = random_params(rng, 2, 5, 6, 3, 4);
        Matrix z = random_matrix(rng, 6, 5);
        Matrix e = random_matrix(rng, 4, 6);
        ConcatMask mask;
        mask.matrix = Matrix(6, 4, 1.0);
        auto base = cross_attention_baseline(z, e, p);
        auto cac = cac_cross_attention(z, trivial_prompt(4), e, mask, p);
        CHECK(cac.z_out.data == base.z_out.data);
        for (int r = 0; r < p.heads; ++r)
            CHECK(cac.record.maps[size_t(r)].data == base.record.maps[size_t(r)].data);
    }
}

TEST_CASE("cac: zero region mask kills the columns and the value rows") {
    Rng rng(4);
    // keys read coords 0..1, values read coords 2..3, so the region value
    // content can change without touching the softmax
    AttentionLayerParams p;
    p.heads = 1;
    p.query_dim = 2;
    p.value_dim = 2;
    p.model_dim = 2;
    p.wq = {Matrix::identity(2)};
    Matrix wk(4, 2), wv(4, 2);
    wk.at(0, 0) = wk.at(1, 1) = 1.0;
    wv.at(2, 0) = wv.at(3, 1) = 1.0;
    p.wk = {wk};
    p.wv = {wv};
    p.wo = Matrix::identity(2);

    Matrix z = random_matrix(rng, 3, 2);
    Matrix e = random_matrix(rng, 5, 4);
    ConcatMask mask;
    mask.matrix = Matrix(3, 5, 1.0);
    for (int j = 0; j < 3; ++j) mask.matrix.at(j, 3) = mask.matrix.at(j, 4) = 0.0;

    ConcatenatedPrompt cp;
    cp.tokens.assign(5, 3);
    cp.segments = {{0, 3}, {3, 5}};
    cp.lambdas.assign(5, 1.0);

    auto out1 = cac_cross_attention(z, cp, e, mask, p);
    Matrix e2 = e;
    e2.at(3, 2) += 5.0;  // value coords of masked tokens
    e2.at(4, 3) -= 7.0;
    auto out2 = cac_cross_attention(z, cp, e2, mask, p);
    for (int j = 0; j < 3; ++j)
        for (int k = 3; k < 5; ++k) CHECK(out1.record.maps[0].at(j, k) == 0.0);
    CHECK(out1.z_out.data == out2.z_out.data);
}

TEST_CASE("cac: lambda scales columns exactly and z_out is affine in lambda") {
    Rng rng(5);
    for (int it = 0; it < 10; ++it) {
        auto p = random_params(rng, 2, 4, 5, 2, 3);
        Matrix z = random_matrix(rng, 4, 4);
        Matrix e = random_matrix(rng, 5, 5);
        ConcatMask mask;
        mask.matrix = Matrix(4, 5, 1.0);
        ConcatenatedPrompt cp = trivial_prompt(5);
        cp.lambdas = {1.0, 2.0, 0.5, 1.0, 3.0};
        auto a = cac_cross_attention(z, cp, e, mask, p);
        int k = int(rng.next_u64() % 5);
        ConcatenatedPrompt cp2 = cp;
        cp2.lambdas[size_t(k)] *= 2.0;
        auto b = cac_cross_attention(z, cp2, e, mask, p);
        for (int r = 0; r < p.heads; ++r)
            for (int j = 0; j < 4; ++j) {
                CHECK(b.record.maps[size_t(r)].at(j, k) ==
                      2.0 * a.record.maps[size_t(r)].at(j, k));
                for (int kk = 0; kk < 5; ++kk)
                    if (kk != k)
                        CHECK(b.record.maps[size_t(r)].at(j, kk) ==
                              a.record.maps[size_t(r)].at(j, kk));
            }
        // affine in lambda_k: out(2l) - out(l) == out(l) - out(l, column k off)
        ConcatMask mask0 = mask;
        for (int j = 0; j < 4; ++j) mask0.matrix.at(j, k) = 0.0;
        auto zero = cac_cross_attention(z, cp, e, mask0, p);
        for (size_t i = 0; i < a.z_out.data.size(); ++i)
            CHECK(b.z_out.data[i] - a.z_out.data[i] ==
                  doctest::Approx(a.z_out.data[i] - zero.z_out.data[i]).epsilon(1e-10));
    }
}

TEST_CASE("cac: renormalize flag restores row mass") {
    Rng rng(6);
    auto p = random_params(rng, 1, 3, 4, 2, 2);
    Matrix z = random_matrix(rng, 2, 3);
    Matrix e = random_matrix(rng, 3, 4);
    ConcatMask mask;
    mask.matrix = Matrix(2, 3, 1.0);
    mask.matrix.at(0, 2) = 0.0;
    auto out = cac_cross_attention(z, trivial_prompt(3), e, mask, p, true);
    for (int j = 0; j < 2; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += out.record.maps[0].at(j, k);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("substring: no spans or transparent span equals baseline") {
    Rng rng(7);
    auto p = random_params(rng, 2, 4, 5, 3, 3);
    Matrix z = random_matrix(rng, 4, 4);
    Matrix e = random_matrix(rng, 6, 5);
    auto base = cross_attention_baseline(z, e, p);

    auto none = substring_cac_attention(z, e, {}, p);
    CHECK(none.z_out.data == base.z_out.data);

    SubstringMask sm;
    sm.span = {1, 3};
    sm.mask.matrix = Matrix(4, 6, 0.0);
    for (int j = 0; j < 4; ++j)
        for (int k = 1; k < 4; ++k) sm.mask.matrix.at(j, k) = 1.0;
    auto ones = substring_cac_attention(z, e, {sm}, p);
    CHECK(ones.z_out.data == base.z_out.data);
}

TEST_CASE("substring: zero span mask zeroes those columns only") {
    Rng rng(8);
    auto p = random_params(rng, 1, 4, 5, 3, 3);
    Matrix z = random_matrix(rng, 4, 4);
    Matrix e = random_matrix(rng, 6, 5);
    auto base = cross_attention_baseline(z, e, p);
    SubstringMask sm;
    sm.span = {2, 2};
    sm.mask.matrix = Matrix(4, 6, 0.0);
    auto out = substring_cac_attention(z, e, {sm}, p);
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 6; ++k) {
            if (k == 2 || k == 3)
                CHECK(out.record.maps[0].at(j, k) == 0.0);
            else
                CHECK(out.record.maps[0].at(j, k) == base.record.maps[0].at(j, k));
        }
}

TEST_CASE("substring: overlapping spans rejected, literal sum double-counts") {
    Rng rng(9);
    auto p = random_params(rng, 1, 3, 4, 2, 2);
    Matrix z = random_matrix(rng, 2, 3);
    Matrix e = random_matrix(rng, 4, 4);
    SubstringMask a, b;
    a.span = {0, 2};
    a.mask.matrix = Matrix(2, 4, 1.0);
    b.span = {1, 2};
    b.mask.matrix = Matrix(2, 4, 1.0);
    CHECK_THROWS_AS(substring_cac_attention(z, e, {a, b}, p), std::invalid_argument);

    auto base = cross_attention_baseline(z, e, p);
    auto lit = substring_cac_attention(z, e, {a}, p, true);
    for (int j = 0; j < 2; ++j) {
        CHECK(lit.record.maps[0].at(j, 0) == 2.0 * base.record.maps[0].at(j, 0));
        CHECK(lit.record.maps[0].at(j, 3) == base.record.maps[0].at(j, 3));
    }
}

TEST_CASE("avg outputs: degenerate cases equal baseline") {
    Rng rng(10);
    auto p = random_params(rng, 2, 4, 5, 2, 3);
    Matrix z = random_matrix(rng, 3, 4);
    Matrix e = random_matrix(rng, 4, 5);
    auto base = cross_attention_baseline(z, e, p);

    Matrix avg0 = compose_average_outputs(z, e, {}, p);
    CHECK(max_abs_diff(avg0, base.z_out) == 0.0);

    Matrix avg_same = compose_average_outputs(z, e, {e, e}, p);
    CHECK(max_abs_diff(avg_same, base.z_out) < 1e-12);

    Matrix e2 = random_matrix(rng, 5, 5);
    Matrix avg = compose_average_outputs(z, e, {e2}, p);
    auto other = cross_attention_baseline(z, e2, p);
    for (size_t i = 0; i < avg.data.size(); ++i)
        CHECK(avg.data[i] ==
              doctest::Approx(0.5 * (base.z_out.data[i] + other.z_out.data[i])).epsilon(1e-12));
}

TEST_CASE("self attention: single pixel and permutation equivariance") {
    Rng rng(11);
    auto p = random_params(rng, 2, 4, 4, 2, 3);
    Matrix z1 = random_matrix(rng, 1, 4);
    Matrix out1 = self_attention(z1, p);
    // attention over one pixel is [1]; output = wo(concat of per-head values)
    Matrix expect(1, p.heads * p.value_dim);
    for (int r = 0; r < p.heads; ++r) {
        Matrix v = matmul(z1, p.wv[size_t(r)]);
        for (int c = 0; c < p.value_dim; ++c) expect.at(0, r * p.value_dim + c) = v.at(0, c);
    }
    CHECK(max_abs_diff(out1, matmul(expect, p.wo)) < 1e-15);

    Matrix z = random_matrix(rng, 5, 4);
    Matrix out = self_attention(z, p);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Matrix zp(5, 4);
    for (int j = 0; j < 5; ++j)
        for (int c = 0; c < 4; ++c) zp.at(j, c) = z.at(perm[size_t(j)], c);
    Matrix outp = self_attention(zp, p);
    for (int j = 0; j < 5; ++j)
        for (int c = 0; c < p.model_dim; ++c)
            CHECK(outp.at(j, c) == doctest::Approx(out.at(perm[size_t(j)], c)).epsilon(1e-12));
}

TEST_CASE("self attention matches a brute-force evaluation") {
    Rng rng(15);
    for (int it = 0; it < 10; ++it) {
        auto p = random_params(rng, 2, 4, 4, 3, 2);
        Matrix z = random_matrix(rng, 6, 4);
        Matrix out = self_attention(z, p);
        auto nb = naive::attention(z, z, p, nullptr, {});
        CHECK(max_abs_diff(out, nb.z_out) < 1e-9);
    }
}

TEST_CASE("randomized brute-force equivalence for baseline and cac paths") {
    Rng rng(12);
    for (int it = 0; it < 40; ++it) {
        int heads = 1 + int(rng.next_u64() % 2);
        int hw = 1 + int(rng.next_u64() % 16);
        int n = 2 + int(rng.next_u64() % 7);
        int model = 2 + int(rng.next_u64() % 4);
        int kv = 2 + int(rng.next_u64() % 4);
        int d = 1 + int(rng.next_u64() % 3);
        int dv = 1 + int(rng.next_u64() % 3);
        auto p = random_params(rng, heads, model, kv, d, dv);
        Matrix z = random_matrix(rng, hw, model);
        Matrix e = random_matrix(rng, n, kv);

        auto base = cross_attention_baseline(z, e, p);
        auto nb = naive::attention(z, e, p, nullptr, {});
        CHECK(max_abs_diff(base.z_out, nb.z_out) < 1e-9);
        for (int r = 0; r < heads; ++r)
            CHECK(max_abs_diff(base.record.maps[size_t(r)], nb.maps[size_t(r)]) < 1e-9);

        ConcatMask mask;
        mask.matrix = Matrix(hw, n);
        for (auto& v : mask.matrix.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
        ConcatenatedPrompt cp = trivial_prompt(n);
        for (auto& l : cp.lambdas) l = rng.uniform(0.5, 10.0);
        auto cac = cac_cross_attention(z, cp, e, mask, p);
        auto nc = naive::attention(z, e, p, &mask.matrix, cp.lambdas);
        CHECK(max_abs_diff(cac.z_out, nc.z_out) < 1e-9);
        for (int r = 0; r < heads; ++r)
            CHECK(max_abs_diff(cac.record.maps[size_t(r)], nc.maps[size_t(r)]) < 1e-9);
    }
}

TEST_CASE("zero-outside-mask invariant and record bounds") {
    Rng rng(13);
    for (int it = 0; it < 20; ++it) {
        int hw = 4, n = 6;
        auto p = random_params(rng, 2, 3, 4, 2, 2);
        Matrix z = random_matrix(rng, hw, 3);
        Matrix e = random_matrix(rng, n, 4);
        ConcatMask mask;
        mask.matrix = Matrix(hw, n);
        for (auto& v : mask.matrix.data) v = rng.next_double() < 0.4 ? 1.0 : 0.0;
        ConcatenatedPrompt cp = trivial_prompt(n);
        double max_lambda = 1.0;
        for (auto& l : cp.lambdas) {
            l = rng.uniform(1.0, 10.0);
            max_lambda = std::max(max_lambda, l);
        }
        auto out = cac_cross_attention(z, cp, e, mask, p);
        for (int r = 0; r < p.heads; ++r)
            for (int j = 0; j < hw; ++j) {
                double row_sum = 0.0;
                for (int k = 0; k < n; ++k) {
                    double v = out.record.maps[size_t(r)].at(j, k);
                    if (mask.matrix.at(j, k) == 0.0) CHECK(v == 0.0);
                    CHECK(v >= 0.0);
                    CHECK(v <= max_lambda);
                    row_sum += v;
                }
                CHECK(row_sum <= max_lambda * n);
            }
    }
}

TEST_CASE("dimension mismatches are contract violations") {
    Rng rng(14);
    auto p = random_params(rng, 1, 3, 4, 2, 2);
    CHECK_THROWS_AS(cross_attention_baseline(Matrix(2, 5), Matrix(2, 4), p),
                    std::invalid_argument);
    CHECK_THROWS_AS(cross_attention_baseline(Matrix(2, 3), Matrix(2, 5), p),
                    std::invalid_argument);
    ConcatMask mask;
    mask.matrix = Matrix(2, 3, 1.0);
    CHECK_THROWS_AS(
        cac_cross_attention(Matrix(2, 3), trivial_prompt(2), Matrix(2, 4), mask, p),
        std::invalid_argument);
}
