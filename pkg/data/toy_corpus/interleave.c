void interleave_pairs(const int *src, int *dst) {
    int even[8];
    int odd[8];
    int half = 4;
    for (int i = 0; i < 8; i++) {
        even[i] = src[2 * i];
        odd[i] = src[2 * i + 1];
    }
    dst[0] = even[0] + odd[0];
    dst[1] = even[1] + odd[1];
    dst[2] = even[2] + odd[2];
    dst[3] = even[half] + odd[half];
}
