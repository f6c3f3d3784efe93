/* C interface to the cacgen engine. All structured results come back as
 * heap-allocated JSON or CSV strings owned by the caller; release them with
 * cac_string_free. Error details for the most recent failing call on the
 * current thread are available via cac_last_error. */
#ifndef CACGEN_H
#define CACGEN_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct cac_engine cac_engine;

typedef enum cac_status {
    CAC_OK = 0,
    CAC_ERR_INVALID_ARGUMENT = 1,
    CAC_ERR_PARSE = 2,
    CAC_ERR_IO = 3,
    CAC_ERR_INTERNAL = 4
} cac_status;

/* vocab_json_path may be NULL for the built-in vocabulary. */
cac_status cac_engine_create(const char* vocab_json_path, cac_engine** out_engine);
void cac_engine_destroy(cac_engine* engine);

const char* cac_status_name(cac_status status);
/* thread-local message for the last failing call; empty string if none */
const char* cac_last_error(void);
void cac_string_free(char* s);

/* Generate images from a scene file. options_json may be NULL or "{}";
 * recognized keys: mode, steps, md_ratio, lambda_caption, lambda_region,
 * seeds, latent, records, heatmap_stride, ppm, renormalize_mask,
 * lambda_on_special, literal_substring_sum, cac_inside_md, beta_start,
 * beta_end. Writes images plus manifest.json under out_dir and returns the
 * manifest. */
cac_status cac_generate(cac_engine* engine, const char* scene_path, const char* options_json,
                        const char* out_dir, char** out_manifest_json);

/* Re-run a previous generation from its manifest. */
cac_status cac_replay(cac_engine* engine, const char* manifest_path, const char* out_dir,
                      char** out_manifest_json);

/* Score a finished run directory against a ground-truth scene file. */
cac_status cac_eval(cac_engine* engine, const char* run_dir, const char* gt_scene_path,
                    char** out_report_json);

/* MD-ratio sweep; options_json additionally recognizes "ratios" (array) and
 * "plot" (bool). Returns CSV text and writes ablate.csv under out_dir. */
cac_status cac_ablate(cac_engine* engine, const char* scene_path, const char* options_json,
                      const char* out_dir, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* CACGEN_H */
