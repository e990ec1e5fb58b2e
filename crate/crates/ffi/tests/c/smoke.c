#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "kron_sgd.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        KsStatus s_ = (call);                                              \
        if (s_ != KS_STATUS_OK) {                                          \
            const char *msg = ks_last_error_message();                     \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,        \
                    msg ? msg : "");                                       \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    KsDataset *ds = NULL;
    KsTrainer *tr = NULL;
    size_t n = 0, p = 0, q = 0;
    double loss = 0.0, before = 0.0, leaf = 0.0;
    double u[16];

    CHECK(ks_dataset_generate(16, 3, 3, 5, 1.0, false, &ds));
    CHECK(ks_dataset_dims(ds, &n, &p, &q));
    if (n != 16 || p != 3 || q != 3) return 2;

    CHECK(ks_trainer_new(ds, 128, 0.0, 5, &tr));
    ks_dataset_free(ds);
    CHECK(ks_trainer_predictions(tr, u, 16));
    for (size_t i = 0; i < 16; i++) before += u[i] * u[i];
    CHECK(ks_trainer_train(tr, 0.05, 4, 50, &loss));
    if (!isfinite(loss)) return 3;

    CHECK(ks_trainer_leaf_value(tr, 1, 1, &leaf));
    if (ks_trainer_leaf_value(tr, 0, 1, &leaf) != KS_STATUS_OUT_OF_RANGE) return 4;
    if (ks_last_error_message() == NULL) return 5;

    ks_trainer_free(tr);
    printf("ok %s loss=%g\n", ks_version(), loss);
    return 0;
}
