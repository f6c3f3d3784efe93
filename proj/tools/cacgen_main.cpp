// cacgen: generate images from scene specs, evaluate run directories, and run
// the MD-ratio ablation sweep. Talks to the engine through the C API only.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cacgen.h"

namespace {

struct EngineHandle {
    cac_engine* ptr = nullptr;
    ~EngineHandle() { cac_engine_destroy(ptr); }
};

struct CommonFlags {
    std::string vocab;
    std::string mode = "cac";
    int steps = 50;
    double md_ratio = 0.4;
    double lambda_caption = 1.0;
    double lambda_region = 10.0;
    int latent = 32;
    std::vector<uint64_t> seeds;
    bool records = false;
    int heatmap_stride = 0;
    bool ppm = false;
    bool renormalize_mask = false;
    bool lambda_on_special = false;
    bool literal_substring_sum = false;
    bool cac_inside_md = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--vocab", f.vocab, "vocabulary JSON file (built-in palette by default)");
    cmd->add_option("--mode", f.mode, "baseline|cac|substring|avg_outputs")
        ->default_val(f.mode);
    cmd->add_option("--steps", f.steps, "denoising steps T")->default_val(f.steps);
    cmd->add_option("--md-ratio", f.md_ratio, "fraction of steps run as MultiDiffusion")
        ->default_val(f.md_ratio);
    cmd->add_option("--lambda-caption", f.lambda_caption, "attention weight for caption tokens")
        ->default_val(f.lambda_caption);
    cmd->add_option("--lambda-region", f.lambda_region, "attention weight for region tokens")
        ->default_val(f.lambda_region);
    cmd->add_option("--latent", f.latent, "latent grid side (multiple of 4)")
        ->default_val(f.latent);
    cmd->add_option("--seed", f.seeds, "seed(s); repeatable");
    cmd->add_flag("--records", f.records, "dump per-layer attention maps (.attn.bin)");
    cmd->add_option("--heatmap-stride", f.heatmap_stride,
                    "emit attention heatmap PNGs every N steps (0 = off)");
    cmd->add_flag("--ppm", f.ppm, "also write PPM images");
    cmd->add_flag("--renorm-mask", f.renormalize_mask,
                  "renormalize attention rows after masking (experiment)");
    cmd->add_flag("--lambda-on-special", f.lambda_on_special,
                  "apply lambda_region to region BOS/EOS tokens (experiment)");
    cmd->add_flag("--literal-substring-sum", f.literal_substring_sum,
                  "substring mode: add masked maps on top of the baseline map");
    cmd->add_flag("--cac-inside-md", f.cac_inside_md,
                  "MD branches reuse the full CAC conditioning (experiment)");
}

nlohmann::json options_json(const CommonFlags& f) {
    nlohmann::json j;
    j["mode"] = f.mode;
    j["steps"] = f.steps;
    j["md_ratio"] = f.md_ratio;
    j["lambda_caption"] = f.lambda_caption;
    j["lambda_region"] = f.lambda_region;
    j["latent"] = f.latent;
    j["seeds"] = f.seeds.empty() ? std::vector<uint64_t>{0} : f.seeds;
    if (f.records) j["records"] = true;
    if (f.heatmap_stride > 0) j["heatmap_stride"] = f.heatmap_stride;
    if (f.ppm) j["ppm"] = true;
    if (f.renormalize_mask) j["renormalize_mask"] = true;
    if (f.lambda_on_special) j["lambda_on_special"] = true;
    if (f.literal_substring_sum) j["literal_substring_sum"] = true;
    if (f.cac_inside_md) j["cac_inside_md"] = true;
    return j;
}

int fail(const char* what, cac_status status) {
    std::fprintf(stderr, "cacgen: %s failed (%s): %s\n", what, cac_status_name(status),
                 cac_last_error());
    return 1;
}

int open_engine(const std::string& vocab, EngineHandle& engine) {
    cac_status st = cac_engine_create(vocab.empty() ? nullptr : vocab.c_str(), &engine.ptr);
    if (st != CAC_OK) return fail("engine setup", st);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale localized text-to-image engine with cross attention control"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "sample images from a scene JSON");
    CommonFlags gf;
    std::string gen_scene, gen_out = "run", gen_manifest;
    gen->add_option("scene", gen_scene, "scene JSON path");
    gen->add_option("--out", gen_out, "output directory")->default_val(gen_out);
    gen->add_option("--from-manifest", gen_manifest, "replay a previous run's manifest.json");
    add_common_flags(gen, gf);

    // eval
    auto* ev = app.add_subcommand("eval", "score a run directory against a ground-truth scene");
    std::string ev_run, ev_gt, ev_vocab;
    ev->add_option("run_dir", ev_run, "directory with manifest.json and images")->required();
    ev->add_option("gt", ev_gt, "ground-truth scene JSON")->required();
    ev->add_option("--vocab", ev_vocab, "vocabulary JSON file");

    // ablate
    auto* ab = app.add_subcommand("ablate", "MD-ratio sweep with and without CAC");
    CommonFlags af;
    std::string ab_scene, ab_out = "ablation", ab_ratios = "0,0.2,0.4,0.6,0.8,1.0";
    bool ab_plot = false;
    ab->add_option("scene", ab_scene, "scene JSON path")->required();
    ab->add_option("--ratios", ab_ratios, "comma-separated MD ratios")->default_val(ab_ratios);
    ab->add_option("--out", ab_out, "output directory")->default_val(ab_out);
    ab->add_flag("--plot", ab_plot, "write an SVG plot of the sweep");
    add_common_flags(ab, af);

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        if (gen_scene.empty() && gen_manifest.empty()) {
            std::fprintf(stderr, "cacgen: generate needs a scene path or --from-manifest\n");
            return 1;
        }
        EngineHandle engine;
        if (int rc = open_engine(gf.vocab, engine)) return rc;
        char* manifest = nullptr;
        cac_status st;
        if (!gen_manifest.empty()) {
            st = cac_replay(engine.ptr, gen_manifest.c_str(), gen_out.c_str(), &manifest);
        } else {
            st = cac_generate(engine.ptr, gen_scene.c_str(), options_json(gf).dump().c_str(),
                              gen_out.c_str(), &manifest);
        }
        if (st != CAC_OK) return fail("generate", st);
        std::printf("%s\n", manifest);
        cac_string_free(manifest);
        return 0;
    }

    if (ev->parsed()) {
        EngineHandle engine;
        if (int rc = open_engine(ev_vocab, engine)) return rc;
        char* report = nullptr;
        cac_status st = cac_eval(engine.ptr, ev_run.c_str(), ev_gt.c_str(), &report);
        if (st != CAC_OK) return fail("eval", st);
        std::printf("%s\n", report);
        cac_string_free(report);
        return 0;
    }

    if (ab->parsed()) {
        EngineHandle engine;
        if (int rc = open_engine(af.vocab, engine)) return rc;
        nlohmann::json opts = options_json(af);
        nlohmann::json ratios = nlohmann::json::array();
        std::string tok;
        for (char c : ab_ratios + ",") {
            if (c == ',') {
                if (!tok.empty()) ratios.push_back(std::stod(tok));
                tok.clear();
            } else {
                tok += c;
            }
        }
        opts["ratios"] = ratios;
        if (ab_plot) opts["plot"] = true;
        char* csv = nullptr;
        cac_status st =
            cac_ablate(engine.ptr, ab_scene.c_str(), opts.dump().c_str(), ab_out.c_str(), &csv);
        if (st != CAC_OK) return fail("ablate", st);
        std::printf("%s", csv);
        cac_string_free(csv);
        return 0;
    }
    return 0;
}
