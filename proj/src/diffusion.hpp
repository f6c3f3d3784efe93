#ifndef CACGEN_DIFFUSION_HPP
#define CACGEN_DIFFUSION_HPP

#include <map>
#include <optional>
#include <vector>

#include "attention.hpp"
#include "layout.hpp"
#include "numerics.hpp"
#include "text.hpp"

namespace cacgen {

// Planar latent tensor, channel-major.
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    LatentGrid() = default;
    LatentGrid(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(size_t(c) * h * w, fill) {}

    double& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
};

enum class SampleMode { kBaseline, kCac, kSubstring, kAvgOutputs };

SampleMode sample_mode_from_string(const std::string& s);
std::string to_string(SampleMode m);

struct SamplerConfig {
    int steps = 50;
    double md_ratio = 0.4;
    uint64_t seed = 0;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double lambda_caption = 1.0;
    double lambda_region = 10.0;
    SampleMode mode = SampleMode::kCac;
    int latent_hw = 32;
    int latent_channels = 4;
    bool record_attention = false;
    bool renormalize_mask = false;    // experiment flag, off by default
    bool lambda_on_special = false;   // weight region BOS/EOS with lambda_region
    bool literal_substring_sum = false;
    bool cac_inside_md = false;       // MD branches reuse the full CAC conditioning
};

// alpha_bar[0] = 1 so the final update returns the predicted clean latent.
struct NoiseSchedule {
    std::vector<double> alpha_bar;  // index 0..T

    static NoiseSchedule linear(int steps, double beta_start, double beta_end);
    int steps() const { return int(alpha_bar.size()) - 1; }
};

// Fixed affine map latent -> RGB at latent resolution; the sampler then
// bilinearly upsamples to image size and clamps.
struct Decoder {
    Matrix weight;                 // latent_channels x 3
    std::array<double, 3> bias{};  // mid-gray offset

    static Decoder painter_default(int latent_channels);
    // channel map only, no resize
    std::vector<Grid> map_channels(const LatentGrid& z) const;
};

struct DenoiserConfig {
    int latent_hw = 32;
    int latent_channels = 4;
    int model_dim = 16;
    int heads = 2;
    int query_dim = 8;
    int value_dim = 8;
    uint64_t seed = 0x70f00d;
    double self_gate = 0.15;
    double cross_gate = 1.0;
    double mass_ref = 0.6;  // concept-attention mass that saturates paint strength
};

// U-shaped stack of alternating self/cross attention blocks at three
// perceptive resolutions (full, half, quarter). The value/output projections
// of every block pass the embeddings' color and concept-mass coordinates
// through, so each cross block deposits attention-weighted palette color into
// reserved feature channels; the head turns those deposits into a clean-latent
// prediction that paints each pixel toward the color of the tokens attending
// to it.
struct ToyDenoiser {
    DenoiserConfig cfg;
    std::vector<AttentionLayerParams> self_blocks;   // 5 blocks: L0 L1 L2 L1 L0
    std::vector<AttentionLayerParams> cross_blocks;  // layer ids 0..4, same shape
    Matrix w_in;    // latent_channels -> non-reserved feature coords
    Matrix pos_enc;  // HW0 x non-reserved feature coords

    static ToyDenoiser build(const DenoiserConfig& cfg, int embed_dim);
    std::vector<LayerDim> cross_layer_dims() const;
};

// Everything a run needs besides the moving latent: the concatenated prompt,
// embeddings, per-layer masks, substring spans when requested, and the MD
// branch conditionings with their latent-resolution blend weights.
struct Conditioning {
    ConcatenatedPrompt prompt;
    Matrix embeds;
    std::vector<MaskPyramid> pyramids;              // one per region
    std::map<int, ConcatMask> masks_by_layer;
    Matrix caption_embeds;
    std::vector<Matrix> region_embeds;              // single-prompt, avg mode + MD branches
    std::map<int, std::vector<SubstringMask>> span_masks_by_layer;  // substring mode only
    std::vector<Grid> branch_weights;               // latent-res masks, regions then caption
    bool has_caption_branch = false;
};

Conditioning build_conditioning(const SceneSpec& scene, const SamplerConfig& cfg,
                                const Vocabulary& vocab, const ToyDenoiser& dn);

// MD iff t > (1 - rho) * T: the highest-noise steps come first.
enum class StepKind { kMd, kCac };
StepKind schedule_control(int t, int steps, double rho);

LatentGrid ddim_update(const LatentGrid& z_t, const LatentGrid& eps, int t,
                       const NoiseSchedule& ns);

LatentGrid predict_eps(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                       const NoiseSchedule& ns, const Conditioning& cond, SampleMode mode,
                       const SamplerConfig& cfg, std::vector<AttentionRecord>* records);

LatentGrid denoise_step(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                        const NoiseSchedule& ns, const Conditioning& cond, SampleMode mode,
                        const SamplerConfig& cfg, std::vector<AttentionRecord>* records);

LatentGrid md_region_step(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                          const NoiseSchedule& ns, const Conditioning& cond,
                          const SamplerConfig& cfg);

std::vector<Grid> decode(const LatentGrid& z0, const Decoder& dec, int image_h, int image_w);

struct SampleResult {
    std::vector<Grid> image;  // RGB
    std::vector<AttentionRecord> records;
};

SampleResult sample(const SceneSpec& scene, const SamplerConfig& cfg, const Vocabulary& vocab,
                    const ToyDenoiser& dn);

}  // namespace cacgen

#endif
