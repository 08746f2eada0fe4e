#include <stdio.h>
#include <string.h>
#include "pca_phasefield.h"

static const char *CONFIG =
    "[params]\n"
    "lambda = 1.0\neta = 1.0\nD = 1.0\ngamma_h = 1.0\ngamma_c = 2.0\ngamma_p = 1.0\n"
    "alpha_h = 0.3\nalpha_c = 0.4\nS_h = 0.5\nS_c = 0.5\nM = 0.1\nm_ref = 1.0\n"
    "rho = 0.0\nA = 0.0\n"
    "[run]\n"
    "dim = 1\nn = [3]\nlength = [1.0]\ndt = 0.01\nt_end = 5.0\noutput_every = 10\n"
    "initial = { kind = \"random\", seed = 7, phi = 1.0, sigma = 0.5, p = 0.5 }\n";

#define CHECK(expr)                                                        \
    do {                                                                   \
        PcaStatus s_ = (expr);                                             \
        if (s_ != PCA_STATUS_OK) {                                         \
            const char *m_ = pca_last_error_message();                     \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_, m_ ? m_ : ""); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    PcaConfig *cfg = NULL;
    PcaRun *run = NULL;
    PcaReport *report = NULL;
    double sample[PCA_SAMPLE_LEN];
    double beta = 0.0;

    if (pca_config_from_toml("[params", &cfg) != PCA_STATUS_CONFIG || cfg != NULL) {
        fprintf(stderr, "malformed config accepted\n");
        return 1;
    }
    CHECK(pca_config_from_toml(CONFIG, &cfg));
    CHECK(pca_run_new(cfg, &run));
    size_t n = pca_run_sample_count(run);
    CHECK(pca_run_sample(run, n - 1, sample, PCA_SAMPLE_LEN));
    CHECK(pca_run_analyze(run, &report));
    CHECK(pca_report_beta_predicted(report, &beta));

    printf("samples=%zu t=%.3f beta=%.3f passed=%d checks=%zu first=%s\n", n, sample[0], beta,
           (int)pca_report_passed(report), pca_report_check_count(report),
           pca_report_check_name(report, 0));
    int ok = n == 51 && sample[0] > 4.999 && beta == 0.5 && pca_report_passed(report) &&
             strcmp(pca_report_check_name(report, 0), "max_principle_phi") == 0;

    pca_report_free(report);
    pca_run_free(run);
    pca_config_free(cfg);
    return ok ? 0 : 1;
}
