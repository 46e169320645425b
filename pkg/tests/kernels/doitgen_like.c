#pragma kernel doitgen params(N=5,M=4)
long buf0[N][N][M];
long buf1[N][N][M];
long buf2[M][M];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    for (c = 0; c < M; c++) {
      // comp_ID: comp00
      buf0[a][b][c] = 0;
    }
  }
}
for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    for (c = 0; c < M; c++) {
      for (d = 0; d < M; d++) {
        // comp_ID: comp01
        buf0[a][b][c] = buf0[a][b][c] + buf1[a][b][d] * buf2[d][c];
      }
    }
  }
}
