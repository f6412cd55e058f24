#include <stdio.h>
#include "dbshadow.h"

int main(void) {
    const char *obs[] = {"1.0 ZZ", "1.0 XI"};
    DbsSystem *sys = NULL;
    if (dbs_system_new(2, "-1.0 ZZ\n-0.8 XI\n-0.8 IX", obs, 2, 1.0, 1.0, 0.0, &sys) != DBS_STATUS_OK) {
        char msg[256];
        dbs_last_error_message(msg, sizeof msg);
        fprintf(stderr, "error: %s\n", msg);
        return 2;
    }
    for (size_t i = 0; i < dbs_system_observables(sys); i++) {
        double signal, exact, worst;
        bool passed;
        dbs_system_signal(sys, i, &signal, &exact);
        dbs_system_verify(sys, i, 1e-8, &worst, &passed);
        printf("observable %zu: signal %.12f exact %.12f worst residual %.2e %s\n",
               i, signal, exact, worst, passed ? "ok" : "FAIL");
        if (!passed) return 1;
    }
    dbs_system_free(sys);
    return 0;
}
