/*
 * morphnas C API: grayscale morphology, pseudo-morphological layer checks,
 * cell-based architecture search, and edge-detection evaluation.
 *
 * Conventions: every function returns a morphnas_status; on failure,
 * morphnas_last_error() describes the problem for the calling thread.
 * Objects returned through out-pointers are owned by the caller and must be
 * released with the matching _free function.
 */
#ifndef MORPHNAS_H
#define MORPHNAS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum morphnas_status {
    MORPHNAS_OK = 0,
    MORPHNAS_EINVAL = 1,  /* bad arguments / usage */
    MORPHNAS_ERUNTIME = 2 /* I/O or runtime failure */
} morphnas_status;

const char* morphnas_version(void);
const char* morphnas_last_error(void);

/* ---- grayscale images (PGM / MTEN) ---- */

typedef struct morphnas_image morphnas_image;

morphnas_status morphnas_image_create(int height, int width, const float* pixels,
                                      morphnas_image** out);
morphnas_status morphnas_image_read_pgm(const char* path, morphnas_image** out);
morphnas_status morphnas_image_write_pgm(const morphnas_image* img, const char* path, int bits);
morphnas_status morphnas_image_read_mten(const char* path, morphnas_image** out);
morphnas_status morphnas_image_write_mten(const morphnas_image* img, const char* path);
int morphnas_image_height(const morphnas_image* img);
int morphnas_image_width(const morphnas_image* img);
/* Copies height*width floats into dst. */
morphnas_status morphnas_image_pixels(const morphnas_image* img, float* dst, size_t capacity);
void morphnas_image_free(morphnas_image* img);

/* ---- structuring elements and classical morphology ---- */

typedef struct morphnas_se morphnas_se;

/* Spec format: "disk:3", "square:2", "cross:1" (square:0 is a single point). */
morphnas_status morphnas_se_parse(const char* text, morphnas_se** out);
void morphnas_se_free(morphnas_se* se);

/* op: erode | dilate | open | close | grad-i | grad-e | grad-m */
morphnas_status morphnas_morph_apply(const char* op, const morphnas_image* input,
                                     const morphnas_se* se, morphnas_image** out);

/* ---- pseudo-morphological layer checks ---- */

/* variant: dilation | erosion | pooling | upsampling | gradient.
 * Writes a PASS/FAIL report into `report` (truncating if needed) and sets
 * *all_pass to 1 iff every property held. rel_tol <= 0 selects the default
 * gradient-check tolerance (1e-4). */
morphnas_status morphnas_layer_check(const char* variant, unsigned seed, double rel_tol,
                                     char* report, size_t capacity, int* all_pass);

/* ---- architecture search ---- */

/* Runs the NAO-style search and writes history.log, best_cell.txt, report.txt
 * and best_ckpt/ into out_dir. config_path may be NULL (defaults apply);
 * seed < 0 defers to the config file. */
morphnas_status morphnas_search_run(const char* space, const char* backbone,
                                    const char* config_path, const char* out_dir, long seed,
                                    int jobs, double* best_score);

/* ---- edge-detection evaluation ---- */

/* metrics: [ODS, OIS, AP, R50]. csv_path may be NULL. */
morphnas_status morphnas_edge_eval_dirs(const char* pred_dir, const char* gt_dir, int nms,
                                        const char* csv_path, double metrics[4]);

/* model: checkpoint directory or "baseline-grad". dataset: synth-shapes-edge.
 * out_dir/csv_path may be NULL. */
morphnas_status morphnas_edge_run(const char* model, const char* dataset, int count, int size,
                                  unsigned seed, int nms, const char* out_dir,
                                  const char* csv_path, double metrics[4]);

#ifdef __cplusplus
}
#endif

#endif /* MORPHNAS_H */
