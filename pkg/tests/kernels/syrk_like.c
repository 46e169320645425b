#pragma kernel syrk params(N=6,M=5)
long buf0[N][N];
long buf1[N][M];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    for (c = 0; c < M; c++) {
      // comp_ID: comp00
      buf0[a][b] = buf0[a][b] + buf1[a][c] * buf1[b][c];
    }
  }
}
