#include "attention.hpp"

#include <cmath>

#include "rng.hpp"

namespace cacgen {

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = scale * rng.unit_variance_uniform();
    return m;
}

void check_query_input(const Matrix& z, const AttentionLayerParams& p) {
    if (z.cols != p.model_dim)
        contract_violation("attention: z feature dim " + std::to_string(z.cols) +
                           " != model_dim " + std::to_string(p.model_dim));
}

void check_kv_input(const Matrix& kv, const AttentionLayerParams& p) {
    if (p.wk.empty() || kv.cols != p.wk[0].rows)
        contract_violation("attention: key/value input dim mismatch");
}

// per-head softmax(Q K^T / sqrt(d)) for one head
Matrix head_attention_map(const Matrix& z, const Matrix& kv, const AttentionLayerParams& p,
                          int head) {
    Matrix q = matmul(z, p.wq[size_t(head)]);
    Matrix k = matmul(kv, p.wk[size_t(head)]);
    Matrix logits = matmul(q, transpose(k));
    return softmax_rows(logits, 1.0 / std::sqrt(double(p.query_dim)));
}

// z_out = l_O(concat_heads(maps[r] V_r))
Matrix project_out(const std::vector<Matrix>& maps, const Matrix& kv,
                   const AttentionLayerParams& p) {
    Matrix concat(maps[0].rows, p.heads * p.value_dim);
    for (int r = 0; r < p.heads; ++r) {
        Matrix v = matmul(kv, p.wv[size_t(r)]);
        Matrix mv = matmul(maps[size_t(r)], v);
        for (int i = 0; i < mv.rows; ++i)
            for (int j = 0; j < mv.cols; ++j) concat.at(i, r * p.value_dim + j) = mv.at(i, j);
    }
    return matmul(concat, p.wo);
}

}  // namespace

AttentionLayerParams AttentionLayerParams::seeded(uint64_t seed, int heads, int model_dim,
                                                  int kv_input_dim, int query_dim,
                                                  int value_dim) {
    AttentionLayerParams p;
    p.heads = heads;
    p.query_dim = query_dim;
    p.value_dim = value_dim;
    p.model_dim = model_dim;
    Rng rng(seed);
    for (int r = 0; r < heads; ++r) {
        p.wq.push_back(random_matrix(rng, model_dim, query_dim, 1.0 / std::sqrt(model_dim)));
        p.wk.push_back(random_matrix(rng, kv_input_dim, query_dim, 1.0 / std::sqrt(kv_input_dim)));
        p.wv.push_back(random_matrix(rng, kv_input_dim, value_dim, 1.0 / std::sqrt(kv_input_dim)));
    }
    p.wo = random_matrix(rng, heads * value_dim, model_dim, 1.0 / std::sqrt(heads * value_dim));
    return p;
}

namespace {

// wv: pass coords 0..3 through per head, mix the rest; wo: head-mean of value
// coords 0..3 into feature coords 0..3, random block elsewhere that never
// writes into the reserved coords.
void apply_painter_coupling(AttentionLayerParams& p, Rng& rng, int kv_input_dim) {
    const int reserved = kHashedCoordsStart;
    for (int r = 0; r < p.heads; ++r) {
        Matrix wv(kv_input_dim, p.value_dim);
        for (int c = 0; c < reserved; ++c) wv.at(c, c) = 1.0;
        double scale = 1.0 / std::sqrt(double(kv_input_dim - reserved));
        for (int i = reserved; i < kv_input_dim; ++i)
            for (int j = reserved; j < p.value_dim; ++j)
                wv.at(i, j) = scale * rng.unit_variance_uniform();
        p.wv[size_t(r)] = std::move(wv);
    }
    Matrix wo(p.heads * p.value_dim, p.model_dim);
    for (int r = 0; r < p.heads; ++r)
        for (int c = 0; c < reserved; ++c) wo.at(r * p.value_dim + c, c) = 1.0 / p.heads;
    double scale = 1.0 / std::sqrt(double(p.heads * (p.value_dim - reserved)));
    for (int r = 0; r < p.heads; ++r)
        for (int i = reserved; i < p.value_dim; ++i)
            for (int j = reserved; j < p.model_dim; ++j)
                wo.at(r * p.value_dim + i, j) = scale * rng.unit_variance_uniform();
    p.wo = std::move(wo);
}

}  // namespace

AttentionLayerParams AttentionLayerParams::painter_cross(uint64_t seed, int heads, int model_dim,
                                                         int embed_dim, int query_dim,
                                                         int value_dim) {
    if (value_dim < kHashedCoordsStart + 1 || model_dim < kHashedCoordsStart + 1)
        contract_violation("painter_cross: value/model dims too small for color coupling");
    AttentionLayerParams p = seeded(seed, heads, model_dim, embed_dim, query_dim, value_dim);
    Rng rng(mix_seed(seed, 0xc01dc01dULL));
    apply_painter_coupling(p, rng, embed_dim);
    return p;
}

AttentionLayerParams AttentionLayerParams::painter_self(uint64_t seed, int heads, int model_dim,
                                                        int query_dim, int value_dim) {
    if (value_dim < kHashedCoordsStart + 1 || model_dim < kHashedCoordsStart + 1)
        contract_violation("painter_self: value/model dims too small for color coupling");
    AttentionLayerParams p = seeded(seed, heads, model_dim, model_dim, query_dim, value_dim);
    Rng rng(mix_seed(seed, 0x5e1f5e1fULL));
    apply_painter_coupling(p, rng, model_dim);
    return p;
}

CrossAttentionOut cross_attention_baseline(const Matrix& z, const Matrix& text_embed,
                                           const AttentionLayerParams& params) {
    check_query_input(z, params);
    check_kv_input(text_embed, params);
    CrossAttentionOut out;
    out.record.layer_id = params.layer_id;
    for (int r = 0; r < params.heads; ++r)
        out.record.maps.push_back(head_attention_map(z, text_embed, params, r));
    out.z_out = project_out(out.record.maps, text_embed, params);
    return out;
}

CrossAttentionOut cac_cross_attention(const Matrix& z, const ConcatenatedPrompt& prompt,
                                      const Matrix& embeds, const ConcatMask& mask,
                                      const AttentionLayerParams& params, bool renormalize) {
    check_query_input(z, params);
    check_kv_input(embeds, params);
    if (embeds.rows != prompt.padded_len())
        contract_violation("cac_cross_attention: embeds rows != prompt length");
    if (mask.matrix.rows != z.rows || mask.matrix.cols != embeds.rows)
        contract_violation("cac_cross_attention: mask shape mismatch");
    const int unpadded = prompt.unpadded_len();
    if (int(prompt.lambdas.size()) != unpadded)
        contract_violation("cac_cross_attention: lambda length != unpadded token count");

    CrossAttentionOut out;
    out.record.layer_id = params.layer_id;
    for (int r = 0; r < params.heads; ++r) {
        Matrix m = head_attention_map(z, embeds, params, r);
        for (int j = 0; j < m.rows; ++j) {
            for (int k = 0; k < m.cols; ++k) {
                double lam = k < unpadded ? prompt.lambdas[size_t(k)] : 1.0;
                m.at(j, k) *= lam * mask.matrix.at(j, k);
            }
            if (renormalize) {
                double sum = 0.0;
                for (int k = 0; k < m.cols; ++k) sum += m.at(j, k);
                if (sum > 0.0)
                    for (int k = 0; k < m.cols; ++k) m.at(j, k) /= sum;
            }
        }
        out.record.maps.push_back(std::move(m));
    }
    out.z_out = project_out(out.record.maps, embeds, params);
    return out;
}

CrossAttentionOut substring_cac_attention(const Matrix& z, const Matrix& caption_embed,
                                          const std::vector<SubstringMask>& span_masks,
                                          const AttentionLayerParams& params, bool literal_sum) {
    check_query_input(z, params);
    check_kv_input(caption_embed, params);
    std::vector<bool> covered(size_t(caption_embed.rows), false);
    for (const auto& sm : span_masks) {
        auto [start, n] = sm.span;
        if (start < 0 || start + n > caption_embed.rows)
            contract_violation("substring_cac_attention: span out of range");
        for (int k = start; k < start + n; ++k) {
            if (covered[size_t(k)])
                contract_violation("substring_cac_attention: overlapping spans at token " +
                                   std::to_string(k));
            covered[size_t(k)] = true;
        }
        if (sm.mask.matrix.rows != z.rows || sm.mask.matrix.cols != caption_embed.rows)
            contract_violation("substring_cac_attention: span mask shape mismatch");
    }

    CrossAttentionOut out;
    out.record.layer_id = params.layer_id;
    for (int r = 0; r < params.heads; ++r) {
        Matrix m0 = head_attention_map(z, caption_embed, params, r);
        Matrix m = m0;
        for (const auto& sm : span_masks) {
            auto [start, n] = sm.span;
            for (int j = 0; j < m.rows; ++j)
                for (int k = start; k < start + n; ++k) {
                    double masked = m0.at(j, k) * sm.mask.matrix.at(j, k);
                    if (literal_sum)
                        m.at(j, k) = m0.at(j, k) + masked;
                    else
                        m.at(j, k) = masked;
                }
        }
        out.record.maps.push_back(std::move(m));
    }
    out.z_out = project_out(out.record.maps, caption_embed, params);
    return out;
}

Matrix compose_average_outputs(const Matrix& z, const Matrix& caption_embed,
                               const std::vector<Matrix>& region_embeds,
                               const AttentionLayerParams& params) {
    check_query_input(z, params);
    Matrix acc = cross_attention_baseline(z, caption_embed, params).z_out;
    for (const auto& e : region_embeds) {
        Matrix zi = cross_attention_baseline(z, e, params).z_out;
        for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += zi.data[i];
    }
    double inv = 1.0 / double(region_embeds.size() + 1);
    for (auto& v : acc.data) v *= inv;
    return acc;
}

Matrix self_attention(const Matrix& z, const AttentionLayerParams& params) {
    check_query_input(z, params);
    check_kv_input(z, params);
    std::vector<Matrix> maps;
    for (int r = 0; r < params.heads; ++r) maps.push_back(head_attention_map(z, z, params, r));
    return project_out(maps, z, params);
}

}  // namespace cacgen
