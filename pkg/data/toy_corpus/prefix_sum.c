void prefix_sum(const int *src, int *dst) {
    int carry = 0;
    int i = 0;
    while (i < 32) {
        carry = carry + src[i];
        dst[i] = carry;
        i = i + 1;
    }
}
