#include <stdio.h>
#include <string.h>
#include "facefit.h"

int main(void) {
    FfModel *model = NULL;
    if (ff_model_sphere_head(&model) != FF_STATUS_OK) return 1;
    size_t nv = 0, nid = 0, nex = 0;
    if (ff_model_dims(model, &nv, NULL, &nid, &nex) != FF_STATUS_OK) return 2;
    if (nv != 642 || nid != 8 || nex != 4) return 3;

    double pt[3] = {0.1, 0.0, 1.0};
    double uv[2], depth;
    FfCamera cam = {{0, 0, 0}, {0, 0, 0}, 500.0, {256.0, 256.0}};
    if (ff_project(pt, 1, &cam, uv, &depth) != FF_STATUS_OK) return 4;
    if (uv[0] != 306.0 || uv[1] != 256.0 || depth != 1.0) return 5;

    FfModel *missing = NULL;
    if (ff_model_load("/nonexistent/model.p3dm", &missing) != FF_STATUS_IO) return 6;
    char msg[256];
    if (ff_last_error_message(msg, sizeof msg) == 0 || strstr(msg, "nonexistent") == NULL) return 7;

    ff_model_free(model);
    printf("ok %s\n", ff_version());
    return 0;
}
