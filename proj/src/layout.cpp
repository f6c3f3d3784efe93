#include "layout.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "png_io.hpp"

namespace cacgen {

const Grid& MaskPyramid::level(int layer_id) const {
    auto it = levels.find(layer_id);
    if (it == levels.end())
        throw std::runtime_error("mask pyramid has no level for layer " +
                                 std::to_string(layer_id));
    return it->second;
}

Grid rasterize_box(const std::array<double, 4>& box, int h, int w) {
    auto [x0, y0, x1, y1] = box;
    if (!(x0 < x1 && y0 < y1) || x0 < 0.0 || y0 < 0.0 || x1 > 1.0 || y1 > 1.0)
        contract_violation("rasterize_box: box must satisfy 0 <= x0 < x1 <= 1, 0 <= y0 < y1 <= 1");
    Grid g(h, w);
    int covered = 0;
    for (int r = 0; r < h; ++r) {
        double cy = (double(r) + 0.5) / double(h);
        if (cy < y0 || cy >= y1) continue;
        for (int c = 0; c < w; ++c) {
            double cx = (double(c) + 0.5) / double(w);
            if (cx >= x0 && cx < x1) {
                g.at(r, c) = 1.0;
                ++covered;
            }
        }
    }
    if (covered == 0)
        throw std::runtime_error("rasterize_box: box covers no pixel centers at " +
                                 std::to_string(h) + "x" + std::to_string(w));
    return g;
}

std::vector<Region> load_labelmap(const std::vector<uint8_t>& labels, int h, int w,
                                  const std::vector<std::string>& class_names,
                                  const Vocabulary& vocab, double min_area_fraction) {
    if (int(labels.size()) != h * w) contract_violation("load_labelmap: size mismatch");
    std::map<int, int> counts;
    for (uint8_t v : labels) ++counts[v];
    std::vector<Region> out;
    for (const auto& [cls, count] : counts) {
        if (cls >= int(class_names.size()))
            throw std::runtime_error("load_labelmap: class id " + std::to_string(cls) +
                                     " has no name");
        if (double(count) < min_area_fraction * double(h) * double(w)) continue;
        Region r;
        r.prompt_text = class_names[size_t(cls)];
        r.prompt = tokenize(r.prompt_text, vocab);
        r.mask = Grid(h, w);
        for (int i = 0; i < h * w; ++i)
            if (labels[size_t(i)] == cls) r.mask.data[size_t(i)] = 1.0;
        r.source = RegionSource::kLabelMap;
        out.push_back(std::move(r));
    }
    return out;
}

MaskPyramid build_mask_pyramid(const Grid& mask, const std::vector<LayerDim>& layer_dims,
                               ResizeMode mode) {
    MaskPyramid p;
    for (const auto& ld : layer_dims)
        p.levels.emplace(ld.layer_id, resize_mask(mask, ld.h, ld.w, mode));
    return p;
}

ConcatMask assemble_concat_mask(const std::vector<MaskPyramid>& pyramids,
                                const ConcatenatedPrompt& prompt, const Vocabulary& vocab,
                                const LayerDim& layer) {
    if (pyramids.size() + 1 != prompt.segments.size())
        contract_violation("assemble_concat_mask: need one pyramid per region segment");
    const int hw = layer.h * layer.w;
    ConcatMask cm;
    cm.layer_id = layer.layer_id;
    cm.matrix = Matrix(hw, prompt.padded_len());

    // caption block: all ones (b_0 is the all-one mask)
    for (int j = 0; j < hw; ++j)
        for (int k = prompt.segments[0].first; k < prompt.segments[0].second; ++k)
            cm.matrix.at(j, k) = 1.0;

    for (size_t i = 0; i < pyramids.size(); ++i) {
        const Grid& b = pyramids[i].level(layer.layer_id);
        if (b.height != layer.h || b.width != layer.w)
            contract_violation("assemble_concat_mask: pyramid level dims mismatch");
        auto [start, end] = prompt.segments[i + 1];
        for (int k = start; k < end; ++k) {
            bool special = vocab.is_special(prompt.tokens[size_t(k)]);
            for (int j = 0; j < hw; ++j) cm.matrix.at(j, k) = special ? 1.0 : b.data[size_t(j)];
        }
    }
    // PAD columns stay zero
    return cm;
}

ConcatMask assemble_substring_mask(const MaskPyramid& pyramid, std::pair<int, int> span,
                                   int caption_len, const LayerDim& layer) {
    auto [start, n] = span;
    if (start < 0 || n < 1 || start + n > caption_len)
        contract_violation("assemble_substring_mask: span out of caption range");
    const Grid& b = pyramid.level(layer.layer_id);
    if (b.height != layer.h || b.width != layer.w)
        contract_violation("assemble_substring_mask: pyramid level dims mismatch");
    const int hw = layer.h * layer.w;
    ConcatMask cm;
    cm.layer_id = layer.layer_id;
    cm.matrix = Matrix(hw, caption_len);
    for (int k = start; k < start + n; ++k)
        for (int j = 0; j < hw; ++j) cm.matrix.at(j, k) = b.data[size_t(j)];
    return cm;
}

std::pair<std::array<double, 4>, std::array<double, 4>> two_object_layout(int h, int w,
                                                                          int margin) {
    if (margin < 0 || w / 2 - 2 * margin <= 0 || h - 2 * margin <= 0)
        throw std::runtime_error("two_object_layout: margin " + std::to_string(margin) +
                                 " is infeasible for " + std::to_string(h) + "x" +
                                 std::to_string(w));
    double m = double(margin);
    std::array<double, 4> left = {m / w, m / h, (w / 2.0 - m) / w, (h - m) / double(h)};
    std::array<double, 4> right = {(w / 2.0 + m) / w, m / h, (w - m) / double(w),
                                   (h - m) / double(h)};
    return {left, right};
}

namespace {

[[noreturn]] void scene_error(const std::string& field, const std::string& why) {
    throw std::runtime_error("scene: field \"" + field + "\": " + why);
}

}  // namespace

SceneSpec parse_scene_json(const nlohmann::json& j, const Vocabulary& vocab,
                           const std::string& base_dir) {
    SceneSpec s;
    if (!j.contains("caption") || !j["caption"].is_string())
        scene_error("caption", "required string");
    if (!j.contains("size") || !j["size"].is_array() || j["size"].size() != 2)
        scene_error("size", "required [H,W]");
    s.caption_text = j["caption"].get<std::string>();
    s.caption = tokenize(s.caption_text, vocab);
    s.image_h = j["size"][0].get<int>();
    s.image_w = j["size"][1].get<int>();
    if (s.image_h < 1 || s.image_w < 1) scene_error("size", "dims must be positive");
    s.channels = j.value("channels", 3);
    if (s.channels != 3) scene_error("channels", "only 3-channel output is supported");
    s.lambda_caption = j.value("lambda_caption", 1.0);
    s.lambda_region = j.value("lambda_region", 10.0);
    if (s.lambda_caption <= 0.0 || s.lambda_region <= 0.0)
        scene_error("lambda_caption/lambda_region", "must be positive");

    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        if (fp.is_absolute()) return p;
        return (std::filesystem::path(base_dir) / fp).string();
    };

    if (j.contains("regions")) {
        if (!j["regions"].is_array()) scene_error("regions", "must be an array");
        for (size_t i = 0; i < j["regions"].size(); ++i) {
            const auto& rj = j["regions"][i];
            std::string tag = "regions[" + std::to_string(i) + "]";
            if (!rj.contains("prompt") || !rj["prompt"].is_string())
                scene_error(tag + ".prompt", "required string");
            Region r;
            r.prompt_text = rj["prompt"].get<std::string>();
            r.prompt = tokenize(r.prompt_text, vocab);
            if (rj.contains("box")) {
                const auto& bj = rj["box"];
                if (!bj.is_array() || bj.size() != 4)
                    scene_error(tag + ".box", "must be [x0,y0,x1,y1]");
                for (int c = 0; c < 4; ++c) r.box[size_t(c)] = bj[size_t(c)].get<double>();
                r.mask = rasterize_box(r.box, s.image_h, s.image_w);
                r.source = RegionSource::kBox;
            } else if (rj.contains("mask_png")) {
                auto img = read_png_rgb(resolve(rj["mask_png"].get<std::string>()));
                if (img[0].height != s.image_h || img[0].width != s.image_w)
                    scene_error(tag + ".mask_png", "mask dims must match scene size");
                r.mask = img[0];  // grayscale masks: all channels equal
                r.source = RegionSource::kMaskImage;
                bool any = std::any_of(r.mask.data.begin(), r.mask.data.end(),
                                       [](double v) { return v > 0.0; });
                if (!any) scene_error(tag + ".mask_png", "mask has no positive pixel");
            } else {
                scene_error(tag, "needs either \"box\" or \"mask_png\"");
            }
            s.regions.push_back(std::move(r));
        }
    }

    if (j.contains("labelmap")) {
        const auto& lm = j["labelmap"];
        if (!lm.contains("png") || !lm.contains("classes"))
            scene_error("labelmap", "needs \"png\" and \"classes\"");
        int lh = 0, lw = 0;
        auto labels = read_png_gray8(resolve(lm["png"].get<std::string>()), &lh, &lw);
        if (lh != s.image_h || lw != s.image_w)
            scene_error("labelmap.png", "label map dims must match scene size");
        std::vector<std::string> names = lm["classes"].get<std::vector<std::string>>();
        double min_area = lm.value("min_area_fraction", 0.05);
        auto regions = load_labelmap(labels, lh, lw, names, vocab, min_area);
        for (auto& r : regions) s.regions.push_back(std::move(r));
    }
    return s;
}

SceneSpec parse_scene(const std::string& path, const Vocabulary& vocab) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("scene: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("scene: " + path + ": " + e.what());
    }
    return parse_scene_json(j, vocab, std::filesystem::path(path).parent_path().string());
}

}  // namespace cacgen
