#include "diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace cacgen {

SampleMode sample_mode_from_string(const std::string& s) {
    if (s == "baseline") return SampleMode::kBaseline;
    if (s == "cac") return SampleMode::kCac;
    if (s == "substring") return SampleMode::kSubstring;
    if (s == "avg_outputs") return SampleMode::kAvgOutputs;
    throw std::runtime_error("unknown mode \"" + s +
                             "\" (expected baseline|cac|substring|avg_outputs)");
}

std::string to_string(SampleMode m) {
    switch (m) {
        case SampleMode::kBaseline: return "baseline";
        case SampleMode::kCac: return "cac";
        case SampleMode::kSubstring: return "substring";
        case SampleMode::kAvgOutputs: return "avg_outputs";
    }
    return "?";
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) contract_violation("noise schedule: steps must be >= 1");
    NoiseSchedule ns;
    ns.alpha_bar.assign(size_t(steps) + 1, 1.0);
    double ab = 1.0;
    for (int t = 1; t <= steps; ++t) {
        double beta = steps == 1
                          ? beta_start
                          : beta_start + (beta_end - beta_start) * double(t - 1) / double(steps - 1);
        ab *= 1.0 - beta;
        ns.alpha_bar[size_t(t)] = ab;
    }
    return ns;
}

Decoder Decoder::painter_default(int latent_channels) {
    Decoder d;
    d.weight = Matrix(latent_channels, 3);
    for (int c = 0; c < 3 && c < latent_channels; ++c) d.weight.at(c, c) = 1.0;
    d.bias = {0.5, 0.5, 0.5};
    return d;
}

std::vector<Grid> Decoder::map_channels(const LatentGrid& z) const {
    if (z.channels != weight.rows) contract_violation("decode: latent channel mismatch");
    std::vector<Grid> rgb(3, Grid(z.height, z.width));
    for (int y = 0; y < z.height; ++y)
        for (int x = 0; x < z.width; ++x)
            for (int o = 0; o < 3; ++o) {
                double v = bias[size_t(o)];
                for (int c = 0; c < z.channels; ++c) v += weight.at(c, o) * z.at(c, y, x);
                rgb[size_t(o)].at(y, x) = v;
            }
    return rgb;
}

ToyDenoiser ToyDenoiser::build(const DenoiserConfig& cfg, int embed_dim) {
    if (cfg.latent_hw < 4 || cfg.latent_hw % 4 != 0)
        contract_violation("denoiser: latent_hw must be a positive multiple of 4");
    if (cfg.model_dim < kHashedCoordsStart + 1)
        contract_violation("denoiser: model_dim too small for the painter coupling");
    ToyDenoiser dn;
    dn.cfg = cfg;
    const int dims[5] = {cfg.latent_hw, cfg.latent_hw / 2, cfg.latent_hw / 4, cfg.latent_hw / 2,
                         cfg.latent_hw};
    for (int b = 0; b < 5; ++b) {
        auto sp = AttentionLayerParams::painter_self(mix_seed(cfg.seed, 100 + uint64_t(b)),
                                                     cfg.heads, cfg.model_dim, cfg.query_dim,
                                                     cfg.value_dim);
        auto cp = AttentionLayerParams::painter_cross(mix_seed(cfg.seed, 200 + uint64_t(b)),
                                                      cfg.heads, cfg.model_dim, embed_dim,
                                                      cfg.query_dim, cfg.value_dim);
        sp.layer_id = b;
        cp.layer_id = b;
        sp.h_l = cp.h_l = dims[b];
        sp.w_l = cp.w_l = dims[b];
        dn.self_blocks.push_back(std::move(sp));
        dn.cross_blocks.push_back(std::move(cp));
    }
    const int free_dim = cfg.model_dim - kHashedCoordsStart;
    Rng rng(mix_seed(cfg.seed, 300));
    dn.w_in = Matrix(cfg.latent_channels, free_dim);
    for (auto& v : dn.w_in.data)
        v = rng.unit_variance_uniform() / std::sqrt(double(cfg.latent_channels));
    dn.pos_enc = Matrix(cfg.latent_hw * cfg.latent_hw, free_dim);
    for (auto& v : dn.pos_enc.data) v = 0.5 * rng.unit_variance_uniform();
    return dn;
}

std::vector<LayerDim> ToyDenoiser::cross_layer_dims() const {
    std::vector<LayerDim> out;
    for (const auto& p : cross_blocks) out.push_back({p.layer_id, p.h_l, p.w_l});
    return out;
}

StepKind schedule_control(int t, int steps, double rho) {
    if (t < 1 || t > steps) contract_violation("schedule_control: t out of range");
    if (rho < 0.0 || rho > 1.0) contract_violation("schedule_control: rho outside [0,1]");
    return double(t) > (1.0 - rho) * double(steps) ? StepKind::kMd : StepKind::kCac;
}

LatentGrid ddim_update(const LatentGrid& z_t, const LatentGrid& eps, int t,
                       const NoiseSchedule& ns) {
    if (t < 1 || t > ns.steps()) contract_violation("ddim_update: t out of range");
    const double ab_t = ns.alpha_bar[size_t(t)];
    const double ab_prev = ns.alpha_bar[size_t(t) - 1];
    const double sab_t = std::sqrt(ab_t);
    const double snab_t = std::sqrt(1.0 - ab_t);
    LatentGrid out(z_t.channels, z_t.height, z_t.width);
    for (size_t i = 0; i < z_t.data.size(); ++i) {
        double z0_hat = (z_t.data[i] - snab_t * eps.data[i]) / sab_t;
        out.data[i] = std::sqrt(ab_prev) * z0_hat + std::sqrt(1.0 - ab_prev) * eps.data[i];
    }
    return out;
}

namespace {

Matrix latent_to_pixel_matrix(const LatentGrid& z) {
    Matrix m(z.height * z.width, z.channels);
    for (int c = 0; c < z.channels; ++c)
        for (int y = 0; y < z.height; ++y)
            for (int x = 0; x < z.width; ++x) m.at(y * z.width + x, c) = z.at(c, y, x);
    return m;
}

Matrix downsample_features(const Matrix& f, int h, int w) {
    Matrix out(h / 2 * (w / 2), f.cols);
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
            for (int c = 0; c < f.cols; ++c) {
                double s = f.at((2 * y) * w + 2 * x, c) + f.at((2 * y) * w + 2 * x + 1, c) +
                           f.at((2 * y + 1) * w + 2 * x, c) + f.at((2 * y + 1) * w + 2 * x + 1, c);
                out.at(y * (w / 2) + x, c) = 0.25 * s;
            }
    return out;
}

Matrix upsample_features(const Matrix& f, int h, int w) {
    Matrix out(2 * h * 2 * w, f.cols);
    for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x)
            for (int c = 0; c < f.cols; ++c)
                out.at(y * 2 * w + x, c) = f.at((y / 2) * w + x / 2, c);
    return out;
}

void add_scaled(Matrix& acc, const Matrix& delta, double gate) {
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += gate * delta.data[i];
}

// one self + cross block pair at the resolution of f
void apply_block(Matrix& f, const ToyDenoiser& dn, int block, const Conditioning& cond,
                 SampleMode mode, const SamplerConfig& cfg, int t,
                 std::vector<AttentionRecord>* records) {
    add_scaled(f, self_attention(f, dn.self_blocks[size_t(block)]), dn.cfg.self_gate);
    const auto& cp = dn.cross_blocks[size_t(block)];
    switch (mode) {
        case SampleMode::kBaseline: {
            auto out = cross_attention_baseline(f, cond.embeds, cp);
            add_scaled(f, out.z_out, dn.cfg.cross_gate);
            if (records) {
                out.record.timestep = t;
                records->push_back(std::move(out.record));
            }
            break;
        }
        case SampleMode::kCac: {
            auto out = cac_cross_attention(f, cond.prompt, cond.embeds,
                                           cond.masks_by_layer.at(cp.layer_id), cp,
                                           cfg.renormalize_mask);
            add_scaled(f, out.z_out, dn.cfg.cross_gate);
            if (records) {
                out.record.timestep = t;
                records->push_back(std::move(out.record));
            }
            break;
        }
        case SampleMode::kSubstring: {
            auto out = substring_cac_attention(f, cond.caption_embeds,
                                               cond.span_masks_by_layer.at(cp.layer_id), cp,
                                               cfg.literal_substring_sum);
            add_scaled(f, out.z_out, dn.cfg.cross_gate);
            if (records) {
                out.record.timestep = t;
                records->push_back(std::move(out.record));
            }
            break;
        }
        case SampleMode::kAvgOutputs: {
            add_scaled(f,
                       compose_average_outputs(f, cond.caption_embeds, cond.region_embeds, cp),
                       dn.cfg.cross_gate);
            break;
        }
    }
}

}  // namespace

LatentGrid predict_eps(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                       const NoiseSchedule& ns, const Conditioning& cond, SampleMode mode,
                       const SamplerConfig& cfg, std::vector<AttentionRecord>* records) {
    const int hw = dn.cfg.latent_hw;
    if (z_t.height != hw || z_t.width != hw || z_t.channels != dn.cfg.latent_channels)
        contract_violation("predict_eps: latent dims do not match the denoiser");

    // input features live in the non-reserved coords; the reserved color/mass
    // coords start at zero and only collect attention deposits
    Matrix proj = matmul(latent_to_pixel_matrix(z_t), dn.w_in);
    Matrix f0(hw * hw, dn.cfg.model_dim);
    for (int j = 0; j < proj.rows; ++j)
        for (int c = 0; c < proj.cols; ++c)
            f0.at(j, kHashedCoordsStart + c) = proj.at(j, c) + dn.pos_enc.at(j, c);

    apply_block(f0, dn, 0, cond, mode, cfg, t, records);
    Matrix f1 = downsample_features(f0, hw, hw);
    apply_block(f1, dn, 1, cond, mode, cfg, t, records);
    Matrix f2 = downsample_features(f1, hw / 2, hw / 2);
    apply_block(f2, dn, 2, cond, mode, cfg, t, records);
    Matrix u1 = upsample_features(f2, hw / 4, hw / 4);
    for (size_t i = 0; i < u1.data.size(); ++i) u1.data[i] += f1.data[i];
    apply_block(u1, dn, 3, cond, mode, cfg, t, records);
    Matrix u0 = upsample_features(u1, hw / 2, hw / 2);
    for (size_t i = 0; i < u0.data.size(); ++i) u0.data[i] += f0.data[i];
    apply_block(u0, dn, 4, cond, mode, cfg, t, records);

    // painter head: move each pixel toward the mean palette color of the
    // concepts attending to it, scaled by how much concept attention landed
    LatentGrid z0_tgt(z_t.channels, hw, hw);
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            int j = y * hw + x;
            double mass = u0.at(j, kConceptMassCoord);
            double strength = std::clamp(mass / dn.cfg.mass_ref, 0.0, 1.0);
            double denom = std::max(mass, 1e-9);
            for (int c = 0; c < 3; ++c)
                z0_tgt.at(c, y, x) = strength * (u0.at(j, kColorCoord + c) / denom);
        }

    const double sab = std::sqrt(ns.alpha_bar[size_t(t)]);
    const double snab = std::sqrt(1.0 - ns.alpha_bar[size_t(t)]);
    LatentGrid eps(z_t.channels, hw, hw);
    for (size_t i = 0; i < eps.data.size(); ++i)
        eps.data[i] = (z_t.data[i] - sab * z0_tgt.data[i]) / snab;
    return eps;
}

LatentGrid denoise_step(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                        const NoiseSchedule& ns, const Conditioning& cond, SampleMode mode,
                        const SamplerConfig& cfg, std::vector<AttentionRecord>* records) {
    return ddim_update(z_t, predict_eps(dn, z_t, t, ns, cond, mode, cfg, records), t, ns);
}

LatentGrid md_region_step(const ToyDenoiser& dn, const LatentGrid& z_t, int t,
                          const NoiseSchedule& ns, const Conditioning& cond,
                          const SamplerConfig& cfg) {
    const size_t n_regions = cond.region_embeds.size();
    if (n_regions == 0)
        return denoise_step(dn, z_t, t, ns, cond, cfg.mode, cfg, nullptr);

    LatentGrid num(z_t.channels, z_t.height, z_t.width);
    Grid wsum(z_t.height, z_t.width);
    size_t n_branches = n_regions + (cond.has_caption_branch ? 1 : 0);
    for (size_t b = 0; b < n_branches; ++b) {
        const Grid& w = cond.branch_weights[b];
        bool all_zero = std::all_of(w.data.begin(), w.data.end(),
                                    [](double v) { return v == 0.0; });
        if (all_zero) continue;
        LatentGrid zb;
        if (cfg.cac_inside_md) {
            zb = denoise_step(dn, z_t, t, ns, cond, SampleMode::kCac, cfg, nullptr);
        } else {
            Conditioning branch;
            branch.embeds = b < n_regions ? cond.region_embeds[b] : cond.caption_embeds;
            zb = denoise_step(dn, z_t, t, ns, branch, SampleMode::kBaseline, cfg, nullptr);
        }
        for (int y = 0; y < z_t.height; ++y)
            for (int x = 0; x < z_t.width; ++x) {
                double wv = w.at(y, x);
                if (wv == 0.0) continue;
                wsum.at(y, x) += wv;
                for (int c = 0; c < z_t.channels; ++c) num.at(c, y, x) += wv * zb.at(c, y, x);
            }
    }
    for (int y = 0; y < z_t.height; ++y)
        for (int x = 0; x < z_t.width; ++x) {
            if (wsum.at(y, x) <= 0.0)
                contract_violation("md_region_step: pixel with zero total blend weight");
            for (int c = 0; c < z_t.channels; ++c) num.at(c, y, x) /= wsum.at(y, x);
        }
    return num;
}

Conditioning build_conditioning(const SceneSpec& scene, const SamplerConfig& cfg,
                                const Vocabulary& vocab, const ToyDenoiser& dn) {
    Conditioning cond;
    std::vector<TokenizedPrompt> region_prompts;
    for (const auto& r : scene.regions) region_prompts.push_back(r.prompt);

    int total = scene.caption.length();
    for (const auto& p : region_prompts) total += p.length();
    cond.prompt = concat_prompts(scene.caption, region_prompts, total, cfg.lambda_caption,
                                 cfg.lambda_region, cfg.lambda_on_special);
    cond.embeds = embed_tokens(cond.prompt.tokens, vocab);
    cond.caption_embeds = embed(scene.caption, vocab);

    auto dims = dn.cross_layer_dims();
    for (const auto& r : scene.regions)
        cond.pyramids.push_back(build_mask_pyramid(r.mask, dims, ResizeMode::kNearest));
    for (const auto& ld : dims)
        cond.masks_by_layer.emplace(ld.layer_id,
                                    assemble_concat_mask(cond.pyramids, cond.prompt, vocab, ld));

    for (const auto& p : region_prompts) cond.region_embeds.push_back(embed(p, vocab));

    if (cfg.mode == SampleMode::kSubstring) {
        std::vector<std::pair<int, int>> spans;
        for (size_t i = 0; i < region_prompts.size(); ++i) {
            auto span = find_substring_span(scene.caption, region_prompts[i]);
            if (!span)
                throw std::runtime_error("substring mode: region prompt \"" +
                                         scene.regions[i].prompt_text +
                                         "\" is not a substring of the caption");
            spans.push_back(*span);
        }
        for (const auto& ld : dims) {
            std::vector<SubstringMask> sms;
            for (size_t i = 0; i < spans.size(); ++i)
                sms.push_back({spans[i], assemble_substring_mask(cond.pyramids[i], spans[i],
                                                                 scene.caption.length(), ld)});
            cond.span_masks_by_layer.emplace(ld.layer_id, std::move(sms));
        }
    }

    // MD blend weights at latent resolution; the caption branch covers
    // whatever the regions leave uncovered
    Grid uncovered(cfg.latent_hw, cfg.latent_hw, 1.0);
    for (const auto& r : scene.regions) {
        Grid w = resize_mask(r.mask, cfg.latent_hw, cfg.latent_hw, ResizeMode::kNearest);
        for (size_t i = 0; i < w.data.size(); ++i)
            uncovered.data[i] = std::min(uncovered.data[i], 1.0 - w.data[i]);
        cond.branch_weights.push_back(std::move(w));
    }
    bool any_uncovered = std::any_of(uncovered.data.begin(), uncovered.data.end(),
                                     [](double v) { return v > 0.0; });
    if (any_uncovered) {
        cond.branch_weights.push_back(std::move(uncovered));
        cond.has_caption_branch = true;
    }
    return cond;
}

std::vector<Grid> decode(const LatentGrid& z0, const Decoder& dec, int image_h, int image_w) {
    std::vector<Grid> rgb = dec.map_channels(z0);
    for (auto& g : rgb) {
        g = resize_bilinear(g, image_h, image_w);
        for (auto& v : g.data) v = std::clamp(v, 0.0, 1.0);
    }
    return rgb;
}

SampleResult sample(const SceneSpec& scene, const SamplerConfig& cfg, const Vocabulary& vocab,
                    const ToyDenoiser& dn) {
    if (cfg.steps < 1) contract_violation("sample: steps must be >= 1");
    if (cfg.md_ratio < 0.0 || cfg.md_ratio > 1.0)
        contract_violation("sample: md_ratio outside [0,1]");
    NoiseSchedule ns = NoiseSchedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end);
    Conditioning cond = build_conditioning(scene, cfg, vocab, dn);

    LatentGrid z(cfg.latent_channels, cfg.latent_hw, cfg.latent_hw);
    Rng rng(mix_seed(cfg.seed, 0x1a7e47ULL));
    for (auto& v : z.data) v = rng.normal();

    SampleResult result;
    std::vector<AttentionRecord>* sink = cfg.record_attention ? &result.records : nullptr;
    for (int t = cfg.steps; t >= 1; --t) {
        if (schedule_control(t, cfg.steps, cfg.md_ratio) == StepKind::kMd &&
            scene.region_count() >= 1) {
            z = md_region_step(dn, z, t, ns, cond, cfg);
        } else {
            z = denoise_step(dn, z, t, ns, cond, cfg.mode, cfg, sink);
        }
    }
    result.image = decode(z, Decoder::painter_default(cfg.latent_channels), scene.image_h,
                          scene.image_w);
    return result;
}

}  // namespace cacgen
