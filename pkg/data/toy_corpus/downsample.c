void downsample2(const int *src, int *dst) {
    int line[16];
    int offset = 8;
    int bias = 2;
#pragma HLS UNROLL factor=2
    for (int i = 0; i < 16; i++) {
        line[i] = src[i] + bias;
    }
    for (int j = 0; j < 8; j++) {
        dst[j] = (line[j] + line[j + offset]) >> 1;
    }
}
