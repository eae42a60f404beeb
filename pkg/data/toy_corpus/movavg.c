void moving_average(const int *src, int *dst) {
    int ring[16];
    int half = 8;
    int total = 0;
    for (int i = 0; i < 16; i++) {
        ring[i] = src[i];
        total = total + ring[i];
    }
    for (int j = 0; j < 8; j++) {
        dst[j] = (ring[j] + ring[j + half]) / 2;
    }
    dst[8] = total >> 4;
}
