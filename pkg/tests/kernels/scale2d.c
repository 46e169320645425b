#pragma kernel scale2d params(N=8,M=7)
long buf0[N][M];
long buf1[N][M];

for (a = 0; a < N; a++) {
  for (b = 0; b < M; b++) {
    // comp_ID: comp00
    buf0[a][b] = buf1[a][b] * 3 + 1;
  }
}
