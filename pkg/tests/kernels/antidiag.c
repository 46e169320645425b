#pragma kernel antidiag params(N=8)
long buf0[N][N];

for (a = 1; a < N; a++) {
  for (b = 0; b < N - 1; b++) {
    // comp_ID: comp00
    buf0[a][b] = buf0[a-1][b+1];
  }
}
