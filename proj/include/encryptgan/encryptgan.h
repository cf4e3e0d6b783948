/* C interface to the encryptgan core. All functions return an egan_status;
 * on failure egan_last_error() describes the problem for the calling thread.
 * Strings returned through char** are heap-allocated and released with
 * egan_string_free. Handles are released with their matching *_free. */
#ifndef ENCRYPTGAN_H
#define ENCRYPTGAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EGAN_API __declspec(dllexport)
#else
#define EGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum egan_status {
    EGAN_OK = 0,
    EGAN_ERR_NOT_FOUND = 1,
    EGAN_ERR_FORMAT = 2,
    EGAN_ERR_SHAPE = 3,
    EGAN_ERR_BOUNDS = 4,
    EGAN_ERR_ARGUMENT = 5,
    EGAN_ERR_CONFIG = 6,
    EGAN_ERR_NUMERICAL = 7,
    EGAN_ERR_VERSION = 8,
    EGAN_ERR_IO = 9,
    EGAN_ERR_SIGNATURE_MISMATCH = 10,
    EGAN_ERR_INTERNAL = 11
} egan_status;

typedef struct egan_model egan_model;     /* frozen checkpoint */
typedef struct egan_image egan_image;     /* 3-channel image, values in [-1, 1] */
typedef struct egan_keypair egan_keypair;

typedef struct egan_placement {
    int top;
    int left;
    int height;
    int width;
} egan_placement;

EGAN_API const char* egan_version(void);
EGAN_API const char* egan_last_error(void);
EGAN_API const char* egan_status_name(egan_status status);
EGAN_API void egan_string_free(char* s);

/* ---- configuration ------------------------------------------------------ */

/* Resolves a config file (NULL for defaults) plus "a.b=value" overrides into
 * a validated JSON document. */
EGAN_API egan_status egan_config_resolve(const char* path, const char* const* overrides, size_t n_overrides,
                                         char** out_json);

/* ---- data ---------------------------------------------------------------- */

EGAN_API egan_status egan_synth_dataset(const char* root, int image_size, int message_size, int train_count,
                                        int test_count, uint64_t seed);

/* ---- training ------------------------------------------------------------ */

/* Called after every step with the JSON loss record. */
typedef void (*egan_step_callback)(const char* record_json, void* user);

/* Trains from config_json (as produced by egan_config_resolve). resume_path may
 * be NULL. Writes <out_dir>/loss_log.jsonl, checkpoints/ and final.ckpt. */
EGAN_API egan_status egan_train(const char* config_json, const char* resume_path, egan_step_callback callback,
                                void* user, char** out_summary_json);

/* ---- models --------------------------------------------------------------- */

EGAN_API egan_status egan_model_load(const char* checkpoint_path, egan_model** out);
EGAN_API void egan_model_free(egan_model* model);
/* step, parameter digest, key-generator digest, config. */
EGAN_API egan_status egan_model_info(const egan_model* model, char** out_json);
EGAN_API egan_status egan_model_image_size(const egan_model* model, int* height, int* width);

/* ---- images --------------------------------------------------------------- */

/* height/width <= 0 keeps the file's size. */
EGAN_API egan_status egan_image_load(const char* path, int height, int width, egan_image** out);
EGAN_API egan_status egan_image_save(const egan_image* image, const char* path);
EGAN_API void egan_image_free(egan_image* image);
EGAN_API egan_status egan_image_size(const egan_image* image, int* height, int* width);
EGAN_API egan_status egan_image_crop(const egan_image* image, const egan_placement* region, egan_image** out);
EGAN_API egan_status egan_image_psnr(const egan_image* a, const egan_image* b, double* out_db);
EGAN_API egan_status egan_image_ssim(const egan_image* a, const egan_image* b, double* out);

EGAN_API egan_status egan_paste_message(const egan_image* cover, const egan_image* message,
                                        const egan_placement* placement, egan_image** out);
/* Uniform placement for a message inside a cover, drawn from seed. */
EGAN_API egan_status egan_random_placement(int cover_height, int cover_width, int message_height, int message_width,
                                           uint64_t seed, egan_placement* out);

/* ---- keys and protocol ---------------------------------------------------- */

EGAN_API egan_status egan_keypair_generate(const egan_model* model, const egan_image* cover,
                                           const egan_image* disguise, const char* cover_ref,
                                           const char* disguise_ref, egan_keypair** out);
EGAN_API void egan_keypair_free(egan_keypair* pair);
/* Copies; free with egan_image_free. */
EGAN_API egan_status egan_keypair_public(const egan_keypair* pair, egan_image** out);
EGAN_API egan_status egan_keypair_private(const egan_keypair* pair, egan_image** out);
/* public_key.png / private_key.png plus JSON sidecars. */
EGAN_API egan_status egan_keypair_save(const egan_keypair* pair, const char* dir);
EGAN_API egan_status egan_keypair_load(const char* dir, egan_keypair** out);

/* A single key file (16-bit PNG + sidecar). role_out may be NULL; it receives
 * 0 for public and 1 for private. */
EGAN_API egan_status egan_key_load(const char* path, egan_image** out, int* role_out);

EGAN_API egan_status egan_encrypt(const egan_model* model, const egan_image* composite, const egan_image* public_key,
                                  egan_image** out);
EGAN_API egan_status egan_decrypt(const egan_model* model, const egan_image* encrypted,
                                  const egan_image* private_key, egan_image** out);
EGAN_API egan_status egan_sign(const egan_model* model, const egan_image* secret, const egan_image* private_key,
                               egan_image** out);
/* verified receives 1 or 0; psnr_out (may be NULL) the recovery PSNR. */
EGAN_API egan_status egan_verify(const egan_model* model, const egan_image* signature, const egan_image* public_key,
                                 const egan_image* expected_secret, double threshold_db, int* verified,
                                 double* psnr_out);

/* ---- evaluation and experiments ------------------------------------------- */

/* options_json keys: "test_data" {x,y,messages} (default: the checkpoint's
 * config), "trials", "wrong_keys", "seed". Writes report.json and records.csv
 * into out_dir when it is not NULL. */
EGAN_API egan_status egan_evaluate(const egan_model* model, const char* options_json, const char* out_dir,
                                   char** out_json);

/* kind: "key_sensitivity", "robustness", "position_sweep", "activations",
 * "wrong_key". Output layout under out_dir: tables/, curves/, figures/,
 * spec.snapshot. */
EGAN_API egan_status egan_experiment(const egan_model* model, const char* kind, const char* options_json,
                                     const char* out_dir, char** out_json);

/* Trains one model per tap set listed in options_json "layer_sets"
 * (e.g. [[1,2,3],[6],[3,5,6]]) and writes tables/ablation.csv. */
EGAN_API egan_status egan_ablate(const char* config_json, const char* options_json, const char* out_dir,
                                 char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* ENCRYPTGAN_H */
