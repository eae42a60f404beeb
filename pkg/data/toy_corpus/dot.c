int dot_product(const int *a, const int *b) {
    int sum = 0;
    int scale = 3;
    for (int k = 0; k < 16; k++) {
        sum = sum + a[k] * b[k];
    }
    return sum * scale;
}
