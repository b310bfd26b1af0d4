#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "beamsweep.h"

#define CHECK(cond)                                                       \
    do {                                                                  \
        if (!(cond)) {                                                    \
            const char *e = bs_last_error();                              \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
                    e ? e : "no error");                                  \
            return 1;                                                     \
        }                                                                 \
    } while (0)

int main(void) {
    double rho = 0.0;
    CHECK(bs_naf_resolution(8, &rho) == BS_STATUS_OK);
    CHECK(fabs(rho - 1.0 / 15.0) < 1e-15);
    CHECK(bs_naf_resolution(0, &rho) == BS_STATUS_INVALID_INPUT);
    CHECK(bs_last_error() != NULL);

    double grid[16];
    size_t len = 0;
    CHECK(bs_minimal_grid(8, 0.5, grid, 16, &len) == BS_STATUS_OK);
    CHECK(len == 15);
    CHECK(bs_dirichlet_kernel(0.0, 15) == 1.0);

    BsConfig *cfg = NULL;
    CHECK(bs_config_from_toml("[omp]\nk_max = 0\n", &cfg) == BS_STATUS_INVALID_CONFIG);
    CHECK(cfg == NULL);
    cfg = bs_config_default();
    BsPipeline *p = NULL;
    CHECK(bs_pipeline_new(cfg, &p) == BS_STATUS_OK);

    double minimal[9];
    CHECK(bs_pipeline_grid(p, false, minimal, 9, &len) == BS_STATUS_OK && len == 9);
    double row[9];
    for (int i = 0; i < 9; i++) {
        row[i] = (i == 4) ? 1.0 : 0.0;
    }
    double dense[81];
    CHECK(bs_reconstruct_row(p, BS_METHOD_DFT, row, 9, dense, 81, &len) == BS_STATUS_OK);
    CHECK(len == 81 && fabs(dense[40] - 1.0) < 1e-9);
    CHECK(bs_reconstruct_row(p, BS_METHOD_DFT, row, 9, dense, 10, &len) == BS_STATUS_BUFFER_TOO_SMALL);
    CHECK(len == 81);

    uint8_t mask[64];
    double profile[64];
    for (int i = 0; i < 64; i++) {
        profile[i] = 1.0;
    }
    profile[32] = 1000.0;
    CHECK(bs_ca_cfar(profile, 64, 1e-6, 8, 5, mask) == BS_STATUS_OK);
    CHECK(mask[32] == 1 && mask[10] == 0);

    bs_pipeline_free(p);
    bs_config_free(cfg);
    bs_pipeline_free(NULL);
    bs_string_free(NULL);
    puts("ok");
    return 0;
}
