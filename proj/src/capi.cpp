#include "cacgen.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>

#include "runner.hpp"

using cacgen::Engine;

struct cac_engine {
    Engine impl;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nlohmann::json parse_options(const char* options_json) {
    if (!options_json || !*options_json) return nlohmann::json::object();
    nlohmann::json j = nlohmann::json::parse(options_json);
    if (!j.is_object()) throw std::runtime_error("options must be a JSON object");
    return j;
}

template <typename Fn>
cac_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return CAC_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return CAC_ERR_INVALID_ARGUMENT;
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return CAC_ERR_PARSE;
    } catch (const std::runtime_error& e) {
        g_last_error = e.what();
        // keep the coarse io/parse split useful for callers
        return std::string(e.what()).find("cannot open") != std::string::npos ? CAC_ERR_IO
                                                                              : CAC_ERR_PARSE;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CAC_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return CAC_ERR_INTERNAL;
    }
}

}  // namespace

extern "C" {

cac_status cac_engine_create(const char* vocab_json_path, cac_engine** out_engine) {
    if (!out_engine) {
        g_last_error = "out_engine is null";
        return CAC_ERR_INVALID_ARGUMENT;
    }
    *out_engine = nullptr;
    return guarded([&] {
        std::optional<std::string> path;
        if (vocab_json_path && *vocab_json_path) path = vocab_json_path;
        *out_engine = new cac_engine{Engine(path)};
    });
}

void cac_engine_destroy(cac_engine* engine) { delete engine; }

const char* cac_status_name(cac_status status) {
    switch (status) {
        case CAC_OK: return "ok";
        case CAC_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case CAC_ERR_PARSE: return "parse_error";
        case CAC_ERR_IO: return "io_error";
        case CAC_ERR_INTERNAL: return "internal_error";
    }
    return "unknown";
}

const char* cac_last_error(void) { return g_last_error.c_str(); }

void cac_string_free(char* s) { std::free(s); }

cac_status cac_generate(cac_engine* engine, const char* scene_path, const char* options_json,
                        const char* out_dir, char** out_manifest_json) {
    if (!engine || !scene_path || !out_dir) {
        g_last_error = "null argument";
        return CAC_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        nlohmann::json manifest =
            engine->impl.generate(scene_path, parse_options(options_json), out_dir);
        if (out_manifest_json) *out_manifest_json = dup_string(manifest.dump(2));
    });
}

cac_status cac_replay(cac_engine* engine, const char* manifest_path, const char* out_dir,
                      char** out_manifest_json) {
    if (!engine || !manifest_path || !out_dir) {
        g_last_error = "null argument";
        return CAC_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        nlohmann::json manifest = engine->impl.replay(manifest_path, out_dir);
        if (out_manifest_json) *out_manifest_json = dup_string(manifest.dump(2));
    });
}

cac_status cac_eval(cac_engine* engine, const char* run_dir, const char* gt_scene_path,
                    char** out_report_json) {
    if (!engine || !run_dir || !gt_scene_path) {
        g_last_error = "null argument";
        return CAC_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        nlohmann::json report = engine->impl.eval(run_dir, gt_scene_path);
        if (out_report_json) *out_report_json = dup_string(report.dump(2));
    });
}

cac_status cac_ablate(cac_engine* engine, const char* scene_path, const char* options_json,
                      const char* out_dir, char** out_csv) {
    if (!engine || !scene_path || !out_dir) {
        g_last_error = "null argument";
        return CAC_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        std::string csv = engine->impl.ablate(scene_path, parse_options(options_json), out_dir);
        if (out_csv) *out_csv = dup_string(csv);
    });
}

}  // extern "C"
