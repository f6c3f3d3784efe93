#ifndef CACGEN_RUNNER_HPP
#define CACGEN_RUNNER_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attention.hpp"
#include "diffusion.hpp"
#include "eval.hpp"
#include "text.hpp"

#include "json.hpp"

namespace cacgen {

// Batch driver behind both the C API and the CLI. Every run writes a
// replayable manifest next to its images.
class Engine {
  public:
    explicit Engine(const std::optional<std::string>& vocab_path);

    const Vocabulary& vocab() const { return vocab_; }

    // scene + options -> images (+ optional record dumps / heatmaps) under
    // out_dir; returns the manifest, which is also written to
    // out_dir/manifest.json
    nlohmann::json generate(const std::string& scene_path, const nlohmann::json& options,
                            const std::string& out_dir);
    nlohmann::json replay(const std::string& manifest_path, const std::string& out_dir);

    nlohmann::json eval(const std::string& run_dir, const std::string& gt_scene_path);

    // rho sweep over {with-CAC, without-CAC}; returns the CSV text and writes
    // ablate.csv (and ablate.svg when options.plot) under out_dir
    std::string ablate(const std::string& scene_path, const nlohmann::json& options,
                       const std::string& out_dir);

    SamplerConfig config_from_options(const nlohmann::json& options,
                                      const SceneSpec& scene) const;
    ToyDenoiser build_denoiser(const SamplerConfig& cfg) const;

  private:
    Vocabulary vocab_;
};

// worker cap: CACGEN_THREADS when set, hardware concurrency otherwise
int thread_budget();
void parallel_for(int n, const std::function<void(int)>& fn);

void write_records(const std::string& path, const std::vector<AttentionRecord>& records);
std::vector<AttentionRecord> read_records(const std::string& path);

// Per-region heatmap of the recorded map: head-mean attention summed over the
// region's content tokens, normalized to the record maximum.
Grid record_heatmap(const AttentionRecord& record, const ConcatenatedPrompt& prompt,
                    const Vocabulary& vocab, int region_index, int h, int w);

std::string render_ablation_svg(const std::vector<double>& ratios,
                                const std::vector<double>& map_cac,
                                const std::vector<double>& map_nocac);

}  // namespace cacgen

#endif
