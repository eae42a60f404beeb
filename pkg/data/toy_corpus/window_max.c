void window_max(const int *src, int *dst) {
    int best = -2147483647;
    int lane[32];
    for (int i = 0; i < 32; i++) {
        lane[i] = src[i];
        if (lane[i] > best) {
            best = lane[i];
        }
    }
    dst[0] = best;
    dst[1] = lane[16];
}
