void histogram_bins(const int *pix, int *bins, int n) {
    int count[4];
    int step = 64;
    for (int b = 0; b < 4; b++) {
        count[b] = 0;
    }
    for (int i = 0; i < n; i++) {
        int v = pix[i] / step;
        count[v] = count[v] + 1;
    }
    bins[0] = count[0];
    bins[1] = count[1];
    bins[2] = count[2];
    bins[3] = count[3];
}
