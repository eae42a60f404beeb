void fir_filter(const int *src, int *dst, int n) {
    int taps[8] = {1, 2, 4, 8, 8, 4, 2, 1};
    int win[8];
    int acc = 0;
#pragma HLS PIPELINE II=1
    for (int i = 0; i < 8; i++) {
        win[i] = src[i];
        acc = acc + win[i] * taps[i];
    }
    dst[0] = acc >> 4;
    dst[1] = acc >> 5;
}
