#include <stdio.h>
#include <string.h>
#include "fixflow.h"

int main(void) {
    const char *plan =
        "[[rows]]\ntask = \"rerank\"\ntasks = 1000\ncost_per_assignment = \"0.05\"\nassignments = 5\n";
    int64_t cents = 0;
    if (fixflow_cost_estimate(plan, &cents, NULL) != FIXFLOW_STATUS_OK || cents != 25000) {
        fprintf(stderr, "cost: %lld\n", (long long)cents);
        return 1;
    }
    bool votes[] = {true, false, true, true, false};
    int32_t decision = -2;
    double agreement = 0;
    if (fixflow_majority_vote(votes, 5, &decision, &agreement) != FIXFLOW_STATUS_OK || decision != 1) {
        return 2;
    }
    FixflowPipeline *p = NULL;
    if (fixflow_pipeline_from_toml("not toml [", &p) != FIXFLOW_STATUS_PARSE || p != NULL) {
        return 3;
    }
    if (fixflow_last_error() == NULL || strlen(fixflow_last_error()) == 0) {
        return 4;
    }
    printf("ok %s\n", fixflow_version());
    return 0;
}
