#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cacgen {

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["images"] = images;
    j["precision"] = detection.precision;
    j["recall"] = detection.recall;
    j["map50"] = detection.map50;
    j["map50_95"] = detection.map50_95;
    if (segmentation) {
        j["miou"] = segmentation->miou;
        j["macc"] = segmentation->macc;
        j["aacc"] = segmentation->aacc;
    }
    if (kid) j["kid"] = *kid;
    j["composition"] = {{"missing_object", composition.missing_object},
                        {"wrong_color", composition.wrong_color},
                        {"correct", composition.correct}};
    if (attn_mass_in) j["attn_mass_in"] = *attn_mass_in;
    return j;
}

namespace {

double color_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += (a[size_t(c)] - b[size_t(c)]) * (a[size_t(c)] - b[size_t(c)]);
    return std::sqrt(s);
}

}  // namespace

std::vector<int> classify_pixels(const std::vector<Grid>& image_rgb,
                                 const std::map<std::string, std::array<double, 3>>& palette,
                                 double dist_threshold) {
    const int h = image_rgb[0].height, w = image_rgb[0].width;
    std::vector<std::array<double, 3>> colors;
    for (const auto& [name, rgb] : palette) colors.push_back(rgb);
    std::vector<int> labels(size_t(h) * w, 0);
    for (int i = 0; i < h * w; ++i) {
        std::array<double, 3> px = {image_rgb[0].data[size_t(i)], image_rgb[1].data[size_t(i)],
                                    image_rgb[2].data[size_t(i)]};
        double best = dist_threshold;
        int best_cls = 0;
        for (int k = 0; k < int(colors.size()); ++k) {
            double d = color_dist(px, colors[size_t(k)]);
            if (d < best) {
                best = d;
                best_cls = k + 1;
            }
        }
        labels[size_t(i)] = best_cls;
    }
    return labels;
}

std::vector<Detection> detect_concepts(const std::vector<Grid>& image_rgb,
                                       const std::map<std::string, std::array<double, 3>>& palette,
                                       const DetectorConfig& dc) {
    if (palette.empty()) contract_violation("detect_concepts: empty palette");
    const int h = image_rgb[0].height, w = image_rgb[0].width;
    std::vector<std::string> names;
    std::vector<std::array<double, 3>> colors;
    for (const auto& [name, rgb] : palette) {
        names.push_back(name);
        colors.push_back(rgb);
    }
    std::vector<int> labels = classify_pixels(image_rgb, palette, dc.dist_threshold);

    // 4-connected components per class via BFS
    std::vector<Detection> out;
    std::vector<char> seen(size_t(h) * w, 0);
    std::vector<int> stack;
    for (int start = 0; start < h * w; ++start) {
        if (seen[size_t(start)] || labels[size_t(start)] == 0) continue;
        int cls = labels[size_t(start)];
        stack.assign(1, start);
        seen[size_t(start)] = 1;
        int minx = w, miny = h, maxx = -1, maxy = -1;
        int area = 0;
        double conf_sum = 0.0;
        while (!stack.empty()) {
            int p = stack.back();
            stack.pop_back();
            int y = p / w, x = p % w;
            minx = std::min(minx, x);
            maxx = std::max(maxx, x);
            miny = std::min(miny, y);
            maxy = std::max(maxy, y);
            ++area;
            std::array<double, 3> px = {image_rgb[0].data[size_t(p)],
                                        image_rgb[1].data[size_t(p)],
                                        image_rgb[2].data[size_t(p)]};
            conf_sum += 1.0 - color_dist(px, colors[size_t(cls) - 1]) / dc.dist_threshold;
            const int nb[4] = {p - w, p + w, p - 1, p + 1};
            const bool ok[4] = {y > 0, y < h - 1, x > 0, x < w - 1};
            for (int k = 0; k < 4; ++k) {
                if (!ok[k]) continue;
                int q = nb[k];
                if (!seen[size_t(q)] && labels[size_t(q)] == cls) {
                    seen[size_t(q)] = 1;
                    stack.push_back(q);
                }
            }
        }
        if (area < dc.min_blob) continue;
        Detection d;
        d.box = {double(minx), double(miny), double(maxx + 1), double(maxy + 1)};
        d.label = names[size_t(cls) - 1];
        d.score = conf_sum / double(area);
        out.push_back(std::move(d));
    }
    return out;
}

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    if (!(a[0] < a[2] && a[1] < a[3] && b[0] < b[2] && b[1] < b[3]))
        contract_violation("iou: degenerate box");
    double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
    double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
    double inter = ix * iy;
    double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> map50_95_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 9; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

namespace {

struct Flagged {
    double score;
    bool tp;
};

// greedy score-ordered matching of one class within one image
void match_class(const std::vector<const Detection*>& preds,
                 const std::vector<const Detection*>& gts, double thr,
                 std::vector<Flagged>& flags, int& tp_count) {
    std::vector<char> taken(gts.size(), 0);
    for (const auto* p : preds) {
        double best = thr;
        int best_g = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            double v = iou(p->box, gts[g]->box);
            if (v >= best) {
                best = v;
                best_g = int(g);
            }
        }
        bool tp = best_g >= 0;
        if (tp) {
            taken[size_t(best_g)] = 1;
            ++tp_count;
        }
        flags.push_back({p->score, tp});
    }
}

double ap_11point(std::vector<Flagged>& flags, int n_gt) {
    if (n_gt == 0) return 0.0;
    std::stable_sort(flags.begin(), flags.end(),
                     [](const Flagged& a, const Flagged& b) { return a.score > b.score; });
    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (const auto& f : flags) {
        f.tp ? ++tp : ++fp;
        precision.push_back(double(tp) / double(tp + fp));
        recall.push_back(double(tp) / double(n_gt));
    }
    double ap = 0.0;
    for (int i = 0; i <= 10; ++i) {
        double r = 0.1 * i;
        double pmax = 0.0;
        for (size_t k = 0; k < recall.size(); ++k)
            if (recall[k] >= r - 1e-12) pmax = std::max(pmax, precision[k]);
        ap += pmax / 11.0;
    }
    return ap;
}

}  // namespace

DetectionMetrics detection_metrics(const std::vector<std::vector<Detection>>& preds,
                                   const std::vector<std::vector<Detection>>& gts,
                                   const std::vector<double>& iou_thresholds) {
    if (preds.size() != gts.size())
        contract_violation("detection_metrics: batch size mismatch");
    for (double t : iou_thresholds)
        if (!(t > 0.0 && t <= 1.0))
            contract_violation("detection_metrics: thresholds must lie in (0,1]");

    // classes present in the ground truth, deterministic order
    std::map<std::string, int> gt_counts;
    for (const auto& img : gts)
        for (const auto& g : img) ++gt_counts[g.label];

    DetectionMetrics out;
    int n_gt_total = std::accumulate(gt_counts.begin(), gt_counts.end(), 0,
                                     [](int a, const auto& kv) { return a + kv.second; });

    auto eval_threshold = [&](double thr, double* precision, double* recall) {
        double ap_sum = 0.0;
        int tp_total = 0, pred_total = 0;
        for (const auto& [cls, n_gt] : gt_counts) {
            std::vector<Flagged> flags;
            int tp_cls = 0;
            for (size_t i = 0; i < preds.size(); ++i) {
                std::vector<const Detection*> p, g;
                for (const auto& d : preds[i])
                    if (d.label == cls) p.push_back(&d);
                for (const auto& d : gts[i])
                    if (d.label == cls) g.push_back(&d);
                std::stable_sort(p.begin(), p.end(), [](const Detection* a, const Detection* b) {
                    return a->score > b->score;
                });
                match_class(p, g, thr, flags, tp_cls);
            }
            tp_total += tp_cls;
            ap_sum += ap_11point(flags, n_gt);
        }
        for (const auto& img : preds) pred_total += int(img.size());
        if (precision) *precision = pred_total > 0 ? double(tp_total) / pred_total : 0.0;
        if (recall) *recall = n_gt_total > 0 ? double(tp_total) / n_gt_total : 0.0;
        return gt_counts.empty() ? 0.0 : ap_sum / double(gt_counts.size());
    };

    out.map50 = eval_threshold(0.5, &out.precision, &out.recall);
    double sum = 0.0;
    for (double t : iou_thresholds) sum += eval_threshold(t, nullptr, nullptr);
    out.map50_95 = iou_thresholds.empty() ? 0.0 : sum / double(iou_thresholds.size());
    return out;
}

SegMetrics segmentation_metrics(const LabelGrid& pred, const LabelGrid& gt) {
    if (pred.height != gt.height || pred.width != gt.width || pred.data.size() != gt.data.size())
        contract_violation("segmentation_metrics: dimension mismatch");
    std::map<int, long> gt_count, pred_count, inter_count;
    long correct = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        ++gt_count[gt.data[i]];
        ++pred_count[pred.data[i]];
        if (gt.data[i] == pred.data[i]) {
            ++inter_count[gt.data[i]];
            ++correct;
        }
    }
    SegMetrics m;
    m.aacc = gt.data.empty() ? 0.0 : double(correct) / double(gt.data.size());
    double iou_sum = 0.0, acc_sum = 0.0;
    for (const auto& [cls, n_gt] : gt_count) {
        long inter = inter_count.count(cls) ? inter_count[cls] : 0;
        long uni = n_gt + (pred_count.count(cls) ? pred_count[cls] : 0) - inter;
        iou_sum += uni > 0 ? double(inter) / double(uni) : 0.0;
        acc_sum += double(inter) / double(n_gt);
    }
    if (!gt_count.empty()) {
        m.miou = iou_sum / double(gt_count.size());
        m.macc = acc_sum / double(gt_count.size());
    }
    return m;
}

namespace {

double poly3_kernel(const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0;
    for (size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    double v = dot / double(x.size()) + 1.0;
    return v * v * v;
}

}  // namespace

double kid(const std::vector<std::vector<double>>& feats_a,
           const std::vector<std::vector<double>>& feats_b) {
    const size_t m = feats_a.size(), n = feats_b.size();
    if (m < 2 || n < 2) throw std::runtime_error("kid: need at least 2 samples per set");
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j)
            if (i != j) kaa += poly3_kernel(feats_a[i], feats_a[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j) kbb += poly3_kernel(feats_b[i], feats_b[j]);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) kab += poly3_kernel(feats_a[i], feats_b[j]);
    return kaa / double(m * (m - 1)) + kbb / double(n * (n - 1)) - 2.0 * kab / double(m * n);
}

std::vector<double> kid_features(const std::vector<Grid>& image_rgb) {
    std::vector<double> f;
    f.reserve(48);
    const int h = image_rgb[0].height, w = image_rgb[0].width;
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < 4; ++by)
            for (int bx = 0; bx < 4; ++bx) {
                int y0 = by * h / 4, y1 = (by + 1) * h / 4;
                int x0 = bx * w / 4, x1 = (bx + 1) * w / 4;
                double s = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) s += image_rgb[size_t(c)].at(y, x);
                f.push_back(s / double(std::max(1, (y1 - y0) * (x1 - x0))));
            }
    return f;
}

Composition composition_categorize(
    const std::vector<Grid>& image_rgb,
    const std::array<std::pair<std::string, std::string>, 2>& color_object_pairs,
    const std::map<std::string, std::array<double, 3>>& palette, const DetectorConfig& dc,
    int margin) {
    for (const auto& [color, object] : color_object_pairs)
        if (!palette.count(color))
            contract_violation("composition_categorize: color \"" + color +
                               "\" is not in the palette");
    const int h = image_rgb[0].height, w = image_rgb[0].width;
    auto [left, right] = two_object_layout(h, w, margin);
    std::array<std::array<double, 4>, 2> slots = {
        std::array<double, 4>{left[0] * w, left[1] * h, left[2] * w, left[3] * h},
        std::array<double, 4>{right[0] * w, right[1] * h, right[2] * w, right[3] * h}};

    auto dets = detect_concepts(image_rgb, palette, dc);
    bool all_present = true, all_correct = true;
    for (int s = 0; s < 2; ++s) {
        const Detection* best = nullptr;
        for (const auto& d : dets) {
            double cx = 0.5 * (d.box[0] + d.box[2]);
            double cy = 0.5 * (d.box[1] + d.box[3]);
            bool inside = cx >= slots[size_t(s)][0] && cx < slots[size_t(s)][2] &&
                          cy >= slots[size_t(s)][1] && cy < slots[size_t(s)][3];
            if (inside && (!best || d.score > best->score)) best = &d;
        }
        if (!best) {
            all_present = false;
            continue;
        }
        if (best->label != color_object_pairs[size_t(s)].first) all_correct = false;
    }
    if (!all_present) return Composition::kMissingObject;
    return all_correct ? Composition::kCorrect : Composition::kWrongColor;
}

double attention_mass_in_mask(const std::vector<AttentionRecord>& records,
                              const ConcatenatedPrompt& prompt, const Vocabulary& vocab,
                              const std::vector<MaskPyramid>& pyramids) {
    if (records.empty()) throw std::runtime_error("attention_mass_in_mask: no records");
    if (pyramids.size() + 1 != prompt.segments.size())
        contract_violation("attention_mass_in_mask: one pyramid per region required");
    double total_ratio = 0.0;
    long counted = 0;
    for (const auto& rec : records) {
        double in_mass = 0.0, all_mass = 0.0;
        for (const auto& m : rec.maps) {
            for (size_t i = 1; i < prompt.segments.size(); ++i) {
                const Grid& b = pyramids[i - 1].level(rec.layer_id);
                if (b.height * b.width != m.rows)
                    contract_violation("attention_mass_in_mask: record/pyramid dims mismatch");
                auto [start, end] = prompt.segments[i];
                for (int k = start; k < end; ++k) {
                    if (vocab.is_special(prompt.tokens[size_t(k)])) continue;
                    for (int j = 0; j < m.rows; ++j) {
                        double v = m.at(j, k);
                        all_mass += v;
                        if (b.data[size_t(j)] > 0.0) in_mass += v;
                    }
                }
            }
        }
        if (all_mass > 0.0) {
            total_ratio += in_mass / all_mass;
            ++counted;
        }
    }
    if (counted == 0) throw std::runtime_error("attention_mass_in_mask: no region token mass");
    return total_ratio / double(counted);
}

}  // namespace cacgen
