#include "bench.hpp"

#include <algorithm>

#include "rng.hpp"

namespace cacgen {

namespace {

const std::vector<std::string>& bench_colors() {
    static const std::vector<std::string> c = {"red",  "green",   "blue", "yellow",
                                               "cyan", "magenta", "orange"};
    return c;
}

const std::vector<std::string>& bench_objects() {
    static const std::vector<std::string> o = {"cube", "ball", "chair", "backpack", "car",
                                               "table", "dog", "cat", "tree"};
    return o;
}

nlohmann::json scene_to_json(const std::string& caption, int hw,
                             const std::vector<std::pair<std::string, std::array<double, 4>>>&
                                 regions) {
    nlohmann::json j;
    j["caption"] = caption;
    j["size"] = {hw, hw};
    j["regions"] = nlohmann::json::array();
    for (const auto& [prompt, box] : regions)
        j["regions"].push_back({{"prompt", prompt}, {"box", {box[0], box[1], box[2], box[3]}}});
    return j;
}

}  // namespace

std::string region_color_token(const Region& region, const Vocabulary& vocab) {
    for (size_t i = 1; i + 1 < region.prompt.tokens.size(); ++i) {
        int id = region.prompt.tokens[i];
        if (vocab.palette_color(id)) return vocab.id_to_token[size_t(id)];
    }
    return {};
}

BenchScene random_box_scene(uint64_t seed, const Vocabulary& vocab, int image_hw,
                            int min_regions, int max_regions) {
    Rng rng(mix_seed(seed, 0xb0c5ULL));
    int m = min_regions + int(rng.next_u64() % uint64_t(max_regions - min_regions + 1));

    // 2x2 cell grid; each region gets its own cell, so boxes stay disjoint
    std::vector<int> cells = {0, 1, 2, 3};
    for (size_t i = cells.size(); i > 1; --i)
        std::swap(cells[i - 1], cells[size_t(rng.next_u64() % uint64_t(i))]);

    std::vector<std::string> colors = bench_colors();
    for (size_t i = colors.size(); i > 1; --i)
        std::swap(colors[i - 1], colors[size_t(rng.next_u64() % uint64_t(i))]);

    std::vector<std::pair<std::string, std::array<double, 4>>> regions;
    BenchScene bs;
    for (int i = 0; i < m; ++i) {
        int cell = cells[size_t(i)];
        double cx0 = (cell % 2) * 0.5, cy0 = (cell / 2) * 0.5;
        // box inside the cell with jittered origin and a size at least half
        // the cell, so the painter has room to work at latent resolution
        double bw = rng.uniform(0.28, 0.42);
        double bh = rng.uniform(0.28, 0.42);
        double x0 = cx0 + rng.uniform(0.02, 0.48 - bw);
        double y0 = cy0 + rng.uniform(0.02, 0.48 - bh);
        std::array<double, 4> box = {x0, y0, x0 + bw, y0 + bh};
        std::string prompt = colors[size_t(i)] + " " +
                             bench_objects()[size_t(rng.next_u64() % bench_objects().size())];
        regions.push_back({prompt, box});
        Detection gt;
        gt.box = {box[0] * image_hw, box[1] * image_hw, box[2] * image_hw, box[3] * image_hw};
        gt.label = colors[size_t(i)];
        bs.gt_boxes.push_back(std::move(gt));
    }
    bs.scene_json = scene_to_json("a synthetic scene", image_hw, regions);
    bs.scene = parse_scene_json(bs.scene_json, vocab, ".");
    return bs;
}

BenchScene two_object_scene(uint64_t seed, const Vocabulary& vocab, int image_hw, int margin) {
    Rng rng(mix_seed(seed, 0xcc500ULL));
    std::vector<std::string> colors = bench_colors();
    size_t c1 = size_t(rng.next_u64() % colors.size());
    size_t c2 = size_t(rng.next_u64() % (colors.size() - 1));
    if (c2 >= c1) ++c2;
    std::string o1 = bench_objects()[size_t(rng.next_u64() % bench_objects().size())];
    std::string o2 = bench_objects()[size_t(rng.next_u64() % bench_objects().size())];

    auto [left, right] = two_object_layout(image_hw, image_hw, margin);
    std::string caption =
        "a " + colors[c1] + " " + o1 + " and a " + colors[c2] + " " + o2;
    std::vector<std::pair<std::string, std::array<double, 4>>> regions = {
        {colors[c1] + " " + o1, left}, {colors[c2] + " " + o2, right}};
    BenchScene bs;
    bs.scene_json = scene_to_json(caption, image_hw, regions);
    bs.scene = parse_scene_json(bs.scene_json, vocab, ".");
    for (int s = 0; s < 2; ++s) {
        const auto& b = s == 0 ? left : right;
        Detection gt;
        gt.box = {b[0] * image_hw, b[1] * image_hw, b[2] * image_hw, b[3] * image_hw};
        gt.label = s == 0 ? colors[c1] : colors[c2];
        bs.gt_boxes.push_back(std::move(gt));
    }
    return bs;
}

std::vector<Grid> ideal_render(const SceneSpec& scene, const Vocabulary& vocab) {
    std::vector<Grid> rgb(3, Grid(scene.image_h, scene.image_w, 0.5));
    for (const auto& region : scene.regions) {
        std::string color = region_color_token(region, vocab);
        if (color.empty()) continue;
        const auto& c = vocab.concept_palette.at(color);
        for (int y = 0; y < scene.image_h; ++y)
            for (int x = 0; x < scene.image_w; ++x)
                if (region.mask.at(y, x) > 0.0)
                    for (int ch = 0; ch < 3; ++ch) rgb[size_t(ch)].at(y, x) = c[size_t(ch)];
    }
    return rgb;
}

}  // namespace cacgen
