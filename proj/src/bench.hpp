#ifndef CACGEN_BENCH_HPP
#define CACGEN_BENCH_HPP

#include <string>
#include <vector>

#include "eval.hpp"
#include "layout.hpp"
#include "text.hpp"

namespace cacgen {

// Synthetic scene generators for the benchmark harness. Boxes are placed on a
// coarse grid so they never collide, colors are drawn without replacement.
struct BenchScene {
    SceneSpec scene;
    nlohmann::json scene_json;
    std::vector<Detection> gt_boxes;  // pixel coords, concept = color token
};

// caption without concept words, 2..4 color+object regions
BenchScene random_box_scene(uint64_t seed, const Vocabulary& vocab, int image_hw = 192,
                            int min_regions = 2, int max_regions = 4);

// CC-500 style "a <color1> <object1> and a <color2> <object2>" with the
// left/right layout heuristic
BenchScene two_object_scene(uint64_t seed, const Vocabulary& vocab, int image_hw = 256,
                            int margin = 40);

// What a perfect generation would look like: each region painted with its
// palette color on mid-gray. Used as the KID reference set.
std::vector<Grid> ideal_render(const SceneSpec& scene, const Vocabulary& vocab);

// first palette token in the region prompt, empty if none
std::string region_color_token(const Region& region, const Vocabulary& vocab);

}  // namespace cacgen

#endif
