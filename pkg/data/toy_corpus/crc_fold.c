void crc_fold(const int *blocks, int *digest, int n) {
    unsigned int state = 1;
    long long mixed = 0;
    for (int i = 0; i < n; i++) {
        state = state ^ (blocks[i] << 1);
        mixed = mixed + state;
    }
    digest[0] = (int)(mixed >> 8);
    digest[1] = (int)(state << 24);
}
