#ifndef CACGEN_EVAL_HPP
#define CACGEN_EVAL_HPP

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attention.hpp"
#include "layout.hpp"
#include "numerics.hpp"
#include "text.hpp"

#include "json.hpp"

namespace cacgen {

struct Detection {
    std::array<double, 4> box{0, 0, 0, 0};  // pixel [x0,y0,x1,y1]
    std::string label;
    double score = 1.0;
};

struct DetectionMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double map50 = 0.0;
    double map50_95 = 0.0;
};

struct SegMetrics {
    double miou = 0.0;
    double macc = 0.0;
    double aacc = 0.0;
};

struct CompositionCounts {
    int missing_object = 0;
    int wrong_color = 0;
    int correct = 0;

    int total() const { return missing_object + wrong_color + correct; }
};

struct MetricsReport {
    DetectionMetrics detection;
    std::optional<SegMetrics> segmentation;
    std::optional<double> kid;
    CompositionCounts composition;
    std::optional<double> attn_mass_in;
    int images = 0;

    nlohmann::json to_json() const;
};

// Nearest-palette pixel classifier plus 4-connected components; the desk
// analog of the pretrained detector. Concepts are colors by construction, so
// color match is object identity.
struct DetectorConfig {
    int min_blob = 16;            // pixels
    double dist_threshold = 0.30;  // max RGB distance counted as a palette hit
};

std::vector<Detection> detect_concepts(const std::vector<Grid>& image_rgb,
                                       const std::map<std::string, std::array<double, 3>>& palette,
                                       const DetectorConfig& dc = {});

// per-pixel nearest-palette labels; 0 = background, i+1 = palette entry i in
// map iteration order
std::vector<int> classify_pixels(const std::vector<Grid>& image_rgb,
                                 const std::map<std::string, std::array<double, 3>>& palette,
                                 double dist_threshold = 0.30);

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

// Greedy score-ordered matching per class per image; P/R at IoU 0.5, AP by
// 11-point interpolation, mAP50-95 over thresholds 0.5:0.05:0.95.
DetectionMetrics detection_metrics(const std::vector<std::vector<Detection>>& preds,
                                   const std::vector<std::vector<Detection>>& gts,
                                   const std::vector<double>& iou_thresholds);
std::vector<double> map50_95_thresholds();

struct LabelGrid {
    int height = 0;
    int width = 0;
    std::vector<int> data;
};

SegMetrics segmentation_metrics(const LabelGrid& pred, const LabelGrid& gt);

// Unbiased squared MMD with the degree-3 polynomial kernel (x.y/dim + 1)^3.
double kid(const std::vector<std::vector<double>>& feats_a,
           const std::vector<std::vector<double>>& feats_b);

// Toy KID features: 4x4 average-pooled RGB, flattened to 48 dims.
std::vector<double> kid_features(const std::vector<Grid>& image_rgb);

enum class Composition { kMissingObject, kWrongColor, kCorrect };

// Two-slot categorization with the left/right layout heuristic: a blob must
// be present at each slot (object), and carry the requested palette color.
Composition composition_categorize(
    const std::vector<Grid>& image_rgb,
    const std::array<std::pair<std::string, std::string>, 2>& color_object_pairs,
    const std::map<std::string, std::array<double, 3>>& palette, const DetectorConfig& dc = {},
    int margin = 40);

// Fraction of region-content-token attention mass that landed inside the
// region masks, averaged over all recorded layers/steps. Records must come
// from a concatenated-prompt run (baseline or cac mode).
double attention_mass_in_mask(const std::vector<AttentionRecord>& records,
                              const ConcatenatedPrompt& prompt, const Vocabulary& vocab,
                              const std::vector<MaskPyramid>& pyramids);

}  // namespace cacgen

#endif
