#ifndef CACGEN_LAYOUT_HPP
#define CACGEN_LAYOUT_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "text.hpp"

namespace cacgen {

enum class RegionSource { kBox, kLabelMap, kMaskImage };

// One localization pair: a prompt plus its spatial constraint mask at scene
// resolution. Box-sourced regions keep the normalized box for evaluation.
struct Region {
    TokenizedPrompt prompt;
    std::string prompt_text;
    Grid mask;  // H x W, values in [0,1], at least one positive pixel
    RegionSource source = RegionSource::kBox;
    std::array<double, 4> box{0, 0, 0, 0};  // normalized [x0,y0,x1,y1], box source only
};

struct SceneSpec {
    TokenizedPrompt caption;
    std::string caption_text;
    std::vector<Region> regions;
    int image_h = 0;
    int image_w = 0;
    int channels = 3;
    double lambda_caption = 1.0;
    double lambda_region = 10.0;

    int region_count() const { return int(regions.size()); }
};

// A region mask resampled to every attention layer's perceptive resolution.
struct MaskPyramid {
    std::map<int, Grid> levels;  // layer id -> H(l) x W(l)

    const Grid& level(int layer_id) const;
};

// Flattened, broadcast location mask for one layer: (H(l)*W(l)) x N columns,
// identical across heads. Caption and special-token columns are all ones,
// PAD columns all zeros.
struct ConcatMask {
    int layer_id = 0;
    Matrix matrix;
    int heads = 1;
};

// Substring fast path: the region mask broadcast over its caption span, zero
// on every other caption column.
struct SubstringMask {
    std::pair<int, int> span;  // (start, length) over caption tokens
    ConcatMask mask;
};

struct LayerDim {
    int layer_id = 0;
    int h = 0;
    int w = 0;
};

// Pixel-center containment: (r,c) is covered iff its center lies inside the
// half-open box [x0,x1) x [y0,y1).
Grid rasterize_box(const std::array<double, 4>& box, int h, int w);

// One region per class present in the label grid; classes covering less than
// min_area_fraction of the pixels are dropped.
std::vector<Region> load_labelmap(const std::vector<uint8_t>& labels, int h, int w,
                                  const std::vector<std::string>& class_names,
                                  const Vocabulary& vocab, double min_area_fraction = 0.05);

MaskPyramid build_mask_pyramid(const Grid& mask, const std::vector<LayerDim>& layer_dims,
                               ResizeMode mode = ResizeMode::kNearest);

ConcatMask assemble_concat_mask(const std::vector<MaskPyramid>& pyramids,
                                const ConcatenatedPrompt& prompt, const Vocabulary& vocab,
                                const LayerDim& layer);

ConcatMask assemble_substring_mask(const MaskPyramid& pyramid, std::pair<int, int> span,
                                   int caption_len, const LayerDim& layer);

// CC-500 style left/right placement with a fixed pixel margin to every border
// and the middle line; returns normalized boxes.
std::pair<std::array<double, 4>, std::array<double, 4>> two_object_layout(int h, int w,
                                                                          int margin = 40);

SceneSpec parse_scene(const std::string& path, const Vocabulary& vocab);
SceneSpec parse_scene_json(const nlohmann::json& j, const Vocabulary& vocab,
                           const std::string& base_dir);

}  // namespace cacgen

#endif
