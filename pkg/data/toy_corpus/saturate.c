void saturate_shift(const int *src, int *dst, int n) {
    unsigned int gain = 5;
    long long wide = 0;
    for (int i = 0; i < n; i++) {
        wide = wide + (src[i] << 3);
    }
    wide = wide + gain;
    dst[0] = (int)(wide >> 2);
    dst[1] = (int)(wide >> 31);
}
