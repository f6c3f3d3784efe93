#include "runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "bench.hpp"
#include "png_io.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace cacgen {

int thread_budget() {
    if (const char* env = std::getenv("CACGEN_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    int workers = std::min(n, thread_budget());
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

}  // namespace

void write_records(const std::string& path, const std::vector<AttentionRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& r : records) {
        if (r.maps.empty()) continue;
        write_u32(f, uint32_t(r.layer_id));
        write_u32(f, uint32_t(r.timestep));
        write_u32(f, uint32_t(r.maps.size()));
        write_u32(f, uint32_t(r.maps[0].rows));
        write_u32(f, uint32_t(r.maps[0].cols));
        for (const auto& m : r.maps)
            f.write(reinterpret_cast<const char*>(m.data.data()),
                    std::streamsize(m.data.size() * sizeof(double)));
    }
}

std::vector<AttentionRecord> read_records(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<AttentionRecord> out;
    for (;;) {
        uint32_t layer = read_u32(f);
        if (!f) break;
        AttentionRecord r;
        r.layer_id = int(layer);
        r.timestep = int(read_u32(f));
        uint32_t heads = read_u32(f);
        uint32_t hw = read_u32(f);
        uint32_t n = read_u32(f);
        if (!f) throw std::runtime_error(path + ": truncated record header");
        for (uint32_t h = 0; h < heads; ++h) {
            Matrix m{int(hw), int(n)};
            f.read(reinterpret_cast<char*>(m.data.data()),
                   std::streamsize(m.data.size() * sizeof(double)));
            if (!f) throw std::runtime_error(path + ": truncated record payload");
            r.maps.push_back(std::move(m));
        }
        out.push_back(std::move(r));
    }
    return out;
}

Grid record_heatmap(const AttentionRecord& record, const ConcatenatedPrompt& prompt,
                    const Vocabulary& vocab, int region_index, int h, int w) {
    if (record.maps.empty() || record.maps[0].rows != h * w)
        contract_violation("record_heatmap: record does not match layer dims");
    if (region_index + 1 >= int(prompt.segments.size()))
        contract_violation("record_heatmap: region index out of range");
    auto [start, end] = prompt.segments[size_t(region_index) + 1];
    Grid g(h, w);
    for (const auto& m : record.maps)
        for (int k = start; k < end; ++k) {
            if (vocab.is_special(prompt.tokens[size_t(k)])) continue;
            for (int j = 0; j < m.rows; ++j) g.data[size_t(j)] += m.at(j, k);
        }
    double mx = 0.0;
    for (double v : g.data) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : g.data) v /= mx;
    return g;
}

Engine::Engine(const std::optional<std::string>& vocab_path)
    : vocab_(vocab_path ? Vocabulary::from_json_file(*vocab_path) : Vocabulary::builtin()) {}

SamplerConfig Engine::config_from_options(const nlohmann::json& options,
                                          const SceneSpec& scene) const {
    SamplerConfig cfg;
    cfg.steps = options.value("steps", 50);
    cfg.md_ratio = options.value("md_ratio", 0.4);
    cfg.mode = sample_mode_from_string(options.value("mode", std::string("cac")));
    cfg.lambda_caption = options.value("lambda_caption", scene.lambda_caption);
    cfg.lambda_region = options.value("lambda_region", scene.lambda_region);
    cfg.latent_hw = options.value("latent", 32);
    cfg.latent_channels = options.value("latent_channels", 4);
    cfg.record_attention = options.value("records", false);
    cfg.renormalize_mask = options.value("renormalize_mask", false);
    cfg.lambda_on_special = options.value("lambda_on_special", false);
    cfg.literal_substring_sum = options.value("literal_substring_sum", false);
    cfg.cac_inside_md = options.value("cac_inside_md", false);
    cfg.beta_start = options.value("beta_start", 1e-4);
    cfg.beta_end = options.value("beta_end", 0.02);
    if (cfg.steps < 1) throw std::runtime_error("options: steps must be >= 1");
    if (cfg.md_ratio < 0.0 || cfg.md_ratio > 1.0)
        throw std::runtime_error("options: md_ratio must lie in [0,1]");
    return cfg;
}

ToyDenoiser Engine::build_denoiser(const SamplerConfig& cfg) const {
    DenoiserConfig dc;
    dc.latent_hw = cfg.latent_hw;
    dc.latent_channels = cfg.latent_channels;
    dc.seed = mix_seed(vocab_.seed, 0xd40153ULL);
    return ToyDenoiser::build(dc, vocab_.embed_dim);
}

namespace {

std::vector<uint64_t> seeds_from_options(const nlohmann::json& options) {
    std::vector<uint64_t> seeds;
    if (options.contains("seeds"))
        for (const auto& s : options["seeds"]) seeds.push_back(s.get<uint64_t>());
    else if (options.contains("seed"))
        seeds.push_back(options["seed"].get<uint64_t>());
    else
        seeds.push_back(0);
    if (seeds.empty()) throw std::runtime_error("options: empty seed list");
    return seeds;
}

}  // namespace

nlohmann::json Engine::generate(const std::string& scene_path, const nlohmann::json& options,
                                const std::string& out_dir) {
    SceneSpec scene = parse_scene(scene_path, vocab_);
    SamplerConfig cfg = config_from_options(options, scene);
    ToyDenoiser dn = build_denoiser(cfg);
    std::vector<uint64_t> seeds = seeds_from_options(options);
    int heat_stride = options.value("heatmap_stride", 0);
    bool ppm = options.value("ppm", false);

    fs::create_directories(out_dir);
    nlohmann::json outputs = nlohmann::json::array();
    std::vector<nlohmann::json> per_seed(seeds.size());

    parallel_for(int(seeds.size()), [&](int i) {
        SamplerConfig run_cfg = cfg;
        run_cfg.seed = seeds[size_t(i)];
        run_cfg.record_attention = cfg.record_attention || heat_stride > 0;
        SampleResult res = sample(scene, run_cfg, vocab_, dn);

        std::string stem = "img_seed" + std::to_string(seeds[size_t(i)]);
        nlohmann::json entry;
        entry["seed"] = seeds[size_t(i)];
        entry["image"] = stem + ".png";
        write_png_rgb((fs::path(out_dir) / (stem + ".png")).string(), res.image);
        if (ppm) {
            entry["ppm"] = stem + ".ppm";
            write_ppm_rgb((fs::path(out_dir) / (stem + ".ppm")).string(), res.image);
        }
        if (cfg.record_attention) {
            entry["records"] = stem + ".attn.bin";
            write_records((fs::path(out_dir) / (stem + ".attn.bin")).string(), res.records);
        }
        if (heat_stride > 0 && scene.region_count() > 0) {
            Conditioning cond = build_conditioning(scene, run_cfg, vocab_, dn);
            nlohmann::json heats = nlohmann::json::array();
            for (const auto& rec : res.records) {
                if ((cfg.steps - rec.timestep) % heat_stride != 0) continue;
                const auto& p = dn.cross_blocks[size_t(rec.layer_id)];
                for (int r = 0; r < scene.region_count(); ++r) {
                    Grid heat = record_heatmap(rec, cond.prompt, vocab_, r, p.h_l, p.w_l);
                    std::string name = stem + "_heat_t" + std::to_string(rec.timestep) + "_l" +
                                       std::to_string(rec.layer_id) + "_r" + std::to_string(r) +
                                       ".png";
                    write_png_gray((fs::path(out_dir) / name).string(), heat);
                    heats.push_back(name);
                }
            }
            entry["heatmaps"] = heats;
        }
        per_seed[size_t(i)] = std::move(entry);
    });

    for (auto& e : per_seed) outputs.push_back(std::move(e));
    nlohmann::json manifest;
    manifest["scene"] = fs::absolute(scene_path).string();
    manifest["options"] = options;
    manifest["outputs"] = outputs;
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    return manifest;
}

nlohmann::json Engine::replay(const std::string& manifest_path, const std::string& out_dir) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("cannot open manifest " + manifest_path);
    nlohmann::json manifest;
    f >> manifest;
    if (!manifest.contains("scene") || !manifest.contains("options"))
        throw std::runtime_error("manifest: missing \"scene\" or \"options\"");
    return generate(manifest["scene"].get<std::string>(), manifest["options"], out_dir);
}

namespace {

std::optional<std::array<double, 4>> mask_tight_box(const Grid& mask) {
    int minx = mask.width, miny = mask.height, maxx = -1, maxy = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x) > 0.0) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
    if (maxx < 0) return std::nullopt;
    return std::array<double, 4>{double(minx), double(miny), double(maxx + 1), double(maxy + 1)};
}

// first non-palette content word (the "object" slot of a region prompt)
std::string region_object_token(const Region& region, const Vocabulary& vocab) {
    for (size_t i = 1; i + 1 < region.prompt.tokens.size(); ++i) {
        int id = region.prompt.tokens[i];
        if (!vocab.palette_color(id) && !vocab.is_special(id))
            return vocab.id_to_token[size_t(id)];
    }
    return {};
}

}  // namespace

nlohmann::json Engine::eval(const std::string& run_dir, const std::string& gt_scene_path) {
    std::ifstream mf(fs::path(run_dir) / "manifest.json");
    if (!mf) throw std::runtime_error("eval: no manifest.json in " + run_dir);
    nlohmann::json manifest;
    mf >> manifest;
    SceneSpec gt = parse_scene(gt_scene_path, vocab_);
    if (manifest["outputs"].empty()) throw std::runtime_error("eval: empty batch");

    // ground-truth detections: one per region that names a palette color
    std::vector<Detection> gt_dets;
    for (const auto& region : gt.regions) {
        std::string color = region_color_token(region, vocab_);
        if (color.empty()) continue;
        auto box = mask_tight_box(region.mask);
        if (!box) continue;
        Detection d;
        d.box = *box;
        d.label = color;
        gt_dets.push_back(std::move(d));
    }

    // gt label grid for segmentation; palette label ids follow the sorted
    // palette order used by classify_pixels, first listed region wins
    std::vector<std::string> palette_names;
    for (const auto& [name, rgb] : vocab_.concept_palette) palette_names.push_back(name);
    auto palette_label = [&](const std::string& color) {
        auto it = std::find(palette_names.begin(), palette_names.end(), color);
        return it == palette_names.end() ? 0 : int(it - palette_names.begin()) + 1;
    };
    LabelGrid gt_labels{gt.image_h, gt.image_w,
                        std::vector<int>(size_t(gt.image_h) * gt.image_w, 0)};
    for (const auto& region : gt.regions) {
        int lbl = palette_label(region_color_token(region, vocab_));
        if (lbl == 0) continue;
        for (size_t i = 0; i < region.mask.data.size(); ++i)
            if (region.mask.data[i] > 0.0 && gt_labels.data[i] == 0)
                gt_labels.data[i] = lbl;
    }

    // composition spec when the scene is a two-object layout
    std::optional<std::array<std::pair<std::string, std::string>, 2>> comp_spec;
    if (gt.regions.size() == 2) {
        std::array<std::pair<std::string, std::string>, 2> pairs;
        bool ok = true;
        for (int i = 0; i < 2; ++i) {
            pairs[size_t(i)] = {region_color_token(gt.regions[size_t(i)], vocab_),
                                region_object_token(gt.regions[size_t(i)], vocab_)};
            if (pairs[size_t(i)].first.empty()) ok = false;
        }
        if (ok) comp_spec = pairs;
    }

    auto ideal = ideal_render(gt, vocab_);
    auto ideal_feats = kid_features(ideal);

    MetricsReport report;
    std::vector<std::vector<Detection>> pred_batch, gt_batch;
    std::vector<std::vector<double>> gen_feats, ref_feats;
    double seg_miou = 0.0, seg_macc = 0.0, seg_aacc = 0.0;
    std::vector<AttentionRecord> all_records;
    for (const auto& out : manifest["outputs"]) {
        auto img = read_png_rgb((fs::path(run_dir) / out["image"].get<std::string>()).string());
        if (img[0].height != gt.image_h || img[0].width != gt.image_w)
            throw std::runtime_error("eval: image dims do not match the ground-truth scene");
        pred_batch.push_back(detect_concepts(img, vocab_.concept_palette));
        gt_batch.push_back(gt_dets);
        gen_feats.push_back(kid_features(img));
        ref_feats.push_back(ideal_feats);
        LabelGrid pred{gt.image_h, gt.image_w, classify_pixels(img, vocab_.concept_palette)};
        SegMetrics sm = segmentation_metrics(pred, gt_labels);
        seg_miou += sm.miou;
        seg_macc += sm.macc;
        seg_aacc += sm.aacc;
        if (comp_spec) {
            switch (composition_categorize(img, *comp_spec, vocab_.concept_palette)) {
                case Composition::kMissingObject: ++report.composition.missing_object; break;
                case Composition::kWrongColor: ++report.composition.wrong_color; break;
                case Composition::kCorrect: ++report.composition.correct; break;
            }
        }
        if (out.contains("records"))
            for (auto& r :
                 read_records((fs::path(run_dir) / out["records"].get<std::string>()).string()))
                all_records.push_back(std::move(r));
    }

    report.images = int(pred_batch.size());
    report.detection = detection_metrics(pred_batch, gt_batch, map50_95_thresholds());
    double n = double(report.images);
    report.segmentation = SegMetrics{seg_miou / n, seg_macc / n, seg_aacc / n};
    if (gen_feats.size() >= 2) report.kid = kid(gen_feats, ref_feats);

    if (!all_records.empty() && !gt.regions.empty()) {
        SamplerConfig cfg = config_from_options(manifest["options"], gt);
        ToyDenoiser dn = build_denoiser(cfg);
        Conditioning cond = build_conditioning(gt, cfg, vocab_, dn);
        report.attn_mass_in =
            attention_mass_in_mask(all_records, cond.prompt, vocab_, cond.pyramids);
    }
    return report.to_json();
}

std::string Engine::ablate(const std::string& scene_path, const nlohmann::json& options,
                           const std::string& out_dir) {
    SceneSpec scene = parse_scene(scene_path, vocab_);
    std::set<double> ratio_set;
    if (options.contains("ratios"))
        for (const auto& r : options["ratios"]) ratio_set.insert(r.get<double>());
    else
        ratio_set = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    for (double r : ratio_set)
        if (r < 0.0 || r > 1.0) throw std::runtime_error("ablate: ratios must lie in [0,1]");
    std::vector<double> ratios(ratio_set.begin(), ratio_set.end());

    std::vector<uint64_t> seeds = seeds_from_options(options);
    if (!options.contains("seeds") && !options.contains("seed")) seeds = {0, 1, 2};

    std::vector<Detection> gt_dets;
    for (const auto& region : scene.regions) {
        std::string color = region_color_token(region, vocab_);
        if (color.empty()) continue;
        Detection d;
        auto box = mask_tight_box(region.mask);
        if (!box) continue;
        d.box = *box;
        d.label = color;
        gt_dets.push_back(std::move(d));
    }

    auto ideal_feats = kid_features(ideal_render(scene, vocab_));

    struct Cell {
        double map50 = 0.0;
        double kid_val = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<std::array<Cell, 2>> table(ratios.size());  // [ratio][arm], arm 0 = cac

    fs::create_directories(out_dir);
    for (size_t ri = 0; ri < ratios.size(); ++ri) {
        for (int arm = 0; arm < 2; ++arm) {
            nlohmann::json opts = options;
            opts["md_ratio"] = ratios[ri];
            opts["mode"] = arm == 0 ? "cac" : "baseline";
            opts.erase("ratios");
            SamplerConfig cfg = config_from_options(opts, scene);
            ToyDenoiser dn = build_denoiser(cfg);

            std::vector<std::vector<Detection>> preds(seeds.size());
            std::vector<std::vector<double>> feats(seeds.size());
            parallel_for(int(seeds.size()), [&](int i) {
                SamplerConfig run_cfg = cfg;
                run_cfg.seed = seeds[size_t(i)];
                SampleResult res = sample(scene, run_cfg, vocab_, dn);
                preds[size_t(i)] = detect_concepts(res.image, vocab_.concept_palette);
                feats[size_t(i)] = kid_features(res.image);
            });
            std::vector<std::vector<Detection>> gts(seeds.size(), gt_dets);
            Cell cell;
            cell.map50 = detection_metrics(preds, gts, {0.5}).map50;
            if (seeds.size() >= 2)
                cell.kid_val =
                    kid(feats, std::vector<std::vector<double>>(seeds.size(), ideal_feats));
            table[ri][size_t(arm)] = cell;
        }
    }

    std::string csv = "rho,arm,map50,kid\n";
    for (size_t ri = 0; ri < ratios.size(); ++ri)
        for (int arm = 0; arm < 2; ++arm) {
            const Cell& c = table[ri][size_t(arm)];
            csv += std::to_string(ratios[ri]) + "," + (arm == 0 ? "cac" : "no_cac") + "," +
                   std::to_string(c.map50) + "," +
                   (std::isnan(c.kid_val) ? "" : std::to_string(c.kid_val)) + "\n";
        }
    std::ofstream cf(fs::path(out_dir) / "ablate.csv");
    cf << csv;

    if (options.value("plot", false)) {
        std::vector<double> mc, mn;
        for (size_t ri = 0; ri < ratios.size(); ++ri) {
            mc.push_back(table[ri][0].map50);
            mn.push_back(table[ri][1].map50);
        }
        std::ofstream sf(fs::path(out_dir) / "ablate.svg");
        sf << render_ablation_svg(ratios, mc, mn);
    }
    return csv;
}

std::string render_ablation_svg(const std::vector<double>& ratios,
                                const std::vector<double>& map_cac,
                                const std::vector<double>& map_nocac) {
    const int w = 480, h = 320, ml = 50, mb = 40, mt = 20, mr = 20;
    auto px = [&](double r) { return ml + r * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - v * (h - mt - mb); };
    auto polyline = [&](const std::vector<double>& ys, const char* color) {
        std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                        "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < ratios.size(); ++i)
            s += std::to_string(px(ratios[i])) + "," + std::to_string(py(ys[i])) + " ";
        return s + "\"/>\n";
    };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
                      "\" height=\"" + std::to_string(h) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(h - mb) +
           "\" x2=\"" + std::to_string(w - mr) + "\" y2=\"" + std::to_string(h - mb) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(mt) + "\" x2=\"" +
           std::to_string(ml) + "\" y2=\"" + std::to_string(h - mb) + "\" stroke=\"black\"/>\n";
    svg += polyline(map_cac, "#1f77b4");
    svg += polyline(map_nocac, "#d62728");
    svg += "<text x=\"" + std::to_string(w / 2) + "\" y=\"" + std::to_string(h - 8) +
           "\" text-anchor=\"middle\" font-size=\"12\">MD ratio</text>\n";
    svg += "<text x=\"14\" y=\"" + std::to_string(h / 2) +
           "\" font-size=\"12\" transform=\"rotate(-90 14 " + std::to_string(h / 2) +
           ")\" text-anchor=\"middle\">mAP50</text>\n";
    svg += "<text x=\"" + std::to_string(w - 120) + "\" y=\"" + std::to_string(mt + 14) +
           "\" font-size=\"12\" fill=\"#1f77b4\">with CAC</text>\n";
    svg += "<text x=\"" + std::to_string(w - 120) + "\" y=\"" + std::to_string(mt + 30) +
           "\" font-size=\"12\" fill=\"#d62728\">without CAC</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace cacgen
