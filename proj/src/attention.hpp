#ifndef CACGEN_ATTENTION_HPP
#define CACGEN_ATTENTION_HPP

#include <vector>

#include "layout.hpp"
#include "numerics.hpp"
#include "text.hpp"

namespace cacgen {

// Projection weights for one multi-head attention layer. Cross layers take
// keys/values from text embeddings, self layers from the image features; the
// input dimension is encoded in the matrices themselves. Construction is
// seeded so goldens stay stable.
struct AttentionLayerParams {
    int heads = 1;
    int query_dim = 1;   // d
    int value_dim = 1;   // d_v
    int model_dim = 1;   // C(l)
    int layer_id = 0;
    int h_l = 0;         // perceptive dims, used by the mask plumbing
    int w_l = 0;

    std::vector<Matrix> wq;  // per head: model_dim x d
    std::vector<Matrix> wk;  // per head: key input dim x d
    std::vector<Matrix> wv;  // per head: value input dim x d_v
    Matrix wo;               // (heads * d_v) x model_dim

    // fully random projections
    static AttentionLayerParams seeded(uint64_t seed, int heads, int model_dim, int kv_input_dim,
                                       int query_dim, int value_dim);
    // painter variants: value coords 0..3 pass the embedding's color/mass
    // coords through untouched and the output projection routes their head
    // mean back into feature coords 0..3
    static AttentionLayerParams painter_cross(uint64_t seed, int heads, int model_dim,
                                              int embed_dim, int query_dim, int value_dim);
    static AttentionLayerParams painter_self(uint64_t seed, int heads, int model_dim,
                                             int query_dim, int value_dim);
};

// Aggregated per-layer cross attention map, kept for diagnostics and metrics.
struct AttentionRecord {
    int layer_id = 0;
    int timestep = -1;
    std::vector<Matrix> maps;  // one (HW x N) matrix per head
};

struct CrossAttentionOut {
    Matrix z_out;
    AttentionRecord record;
};

// M0 = softmax(Q K^T / sqrt(d)) per head; z_out = l_O(concat_heads(M0 V0)).
CrossAttentionOut cross_attention_baseline(const Matrix& z, const Matrix& text_embed,
                                           const AttentionLayerParams& params);

// M = lambda * softmax(Q K^T / sqrt(d)) (.) B, applied post-softmax with no
// renormalization; renormalize is an off-by-default experiment flag that
// rescales each row by its surviving mass.
CrossAttentionOut cac_cross_attention(const Matrix& z, const ConcatenatedPrompt& prompt,
                                      const Matrix& embeds, const ConcatMask& mask,
                                      const AttentionLayerParams& params,
                                      bool renormalize = false);

// Substring fast path over the caption's own columns: span columns are
// replaced by their masked copies, all other tokens keep baseline attention.
// literal_sum instead adds the masked copies on top of M0 (the double-counting
// reading of the summed-map formulation).
CrossAttentionOut substring_cac_attention(const Matrix& z, const Matrix& caption_embed,
                                          const std::vector<SubstringMask>& span_masks,
                                          const AttentionLayerParams& params,
                                          bool literal_sum = false);

// Rejected composition kept as an ablation mode: every prompt is attended
// independently and the layer outputs are averaged.
Matrix compose_average_outputs(const Matrix& z, const Matrix& caption_embed,
                               const std::vector<Matrix>& region_embeds,
                               const AttentionLayerParams& params);

Matrix self_attention(const Matrix& z, const AttentionLayerParams& params);

}  // namespace cacgen

#endif
