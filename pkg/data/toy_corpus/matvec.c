void matvec4(const int *mat, const int *vec, int *out) {
    int row[4];
#pragma HLS ARRAY_PARTITION variable=row complete
    for (int r = 0; r < 4; r++) {
        int acc = 0;
        for (int c = 0; c < 4; c++) {
            acc = acc + mat[r * 4 + c] * vec[c];
        }
        row[r] = acc;
    }
    out[0] = row[0] + row[1];
    out[1] = row[2] + row[3];
}
