// Test-only brute-force attention oracle: a from-scratch triple-loop
// evaluation of the baseline, masked, and lambda-weighted attention maps that
// never touches the library's matmul/softmax path.
#ifndef CACGEN_TESTS_NAIVE_ATTENTION_HPP
#define CACGEN_TESTS_NAIVE_ATTENTION_HPP

#include <cmath>
#include <vector>

#include "attention.hpp"
#include "numerics.hpp"

namespace naive {

struct Out {
    std::vector<cacgen::Matrix> maps;  // per head
    cacgen::Matrix z_out;
};

// lambda may be empty (all ones); mask may be null (all ones)
inline Out attention(const cacgen::Matrix& z, const cacgen::Matrix& kv,
                     const cacgen::AttentionLayerParams& p, const cacgen::Matrix* mask,
                     const std::vector<double>& lambda) {
    const int hw = z.rows, n = kv.rows;
    Out out;
    cacgen::Matrix concat(hw, p.heads * p.value_dim);
    for (int r = 0; r < p.heads; ++r) {
        std::vector<std::vector<double>> q(size_t(hw), std::vector<double>(size_t(p.query_dim)));
        std::vector<std::vector<double>> k(size_t(n), std::vector<double>(size_t(p.query_dim)));
        std::vector<std::vector<double>> v(size_t(n), std::vector<double>(size_t(p.value_dim)));
        for (int j = 0; j < hw; ++j)
            for (int e = 0; e < p.query_dim; ++e)
                for (int c = 0; c < z.cols; ++c)
                    q[size_t(j)][size_t(e)] += z.at(j, c) * p.wq[size_t(r)].at(c, e);
        for (int t = 0; t < n; ++t) {
            for (int e = 0; e < p.query_dim; ++e)
                for (int c = 0; c < kv.cols; ++c)
                    k[size_t(t)][size_t(e)] += kv.at(t, c) * p.wk[size_t(r)].at(c, e);
            for (int e = 0; e < p.value_dim; ++e)
                for (int c = 0; c < kv.cols; ++c)
                    v[size_t(t)][size_t(e)] += kv.at(t, c) * p.wv[size_t(r)].at(c, e);
        }
        cacgen::Matrix m(hw, n);
        for (int j = 0; j < hw; ++j) {
            double denom = 0.0;
            std::vector<double> ex(size_t(n));
            for (int t = 0; t < n; ++t) {
                double logit = 0.0;
                for (int c = 0; c < p.query_dim; ++c)
                    logit += q[size_t(j)][size_t(c)] * k[size_t(t)][size_t(c)];
                ex[size_t(t)] = std::exp(logit / std::sqrt(double(p.query_dim)));
                denom += ex[size_t(t)];
            }
            for (int t = 0; t < n; ++t) {
                double val = ex[size_t(t)] / denom;
                if (!lambda.empty()) val *= lambda[size_t(t)];
                if (mask) val *= mask->at(j, t);
                m.at(j, t) = val;
            }
        }
        for (int j = 0; j < hw; ++j)
            for (int e2 = 0; e2 < p.value_dim; ++e2) {
                double s = 0.0;
                for (int t = 0; t < n; ++t) s += m.at(j, t) * v[size_t(t)][size_t(e2)];
                concat.at(j, r * p.value_dim + e2) = s;
            }
        out.maps.push_back(std::move(m));
    }
    out.z_out = cacgen::Matrix(hw, p.model_dim);
    for (int j = 0; j < hw; ++j)
        for (int c = 0; c < p.model_dim; ++c) {
            double s = 0.0;
            for (int e = 0; e < p.heads * p.value_dim; ++e)
                s += concat.at(j, e) * p.wo.at(e, c);
            out.z_out.at(j, c) = s;
        }
    return out;
}

}  // namespace naive

#endif
