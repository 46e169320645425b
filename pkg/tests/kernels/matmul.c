#pragma kernel matmul params(N=6)
long buf0[N][N];
long buf1[N][N];
long buf2[N][N];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp00
    buf0[a][b] = 0;
  }
}
for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    for (c = 0; c < N; c++) {
      // comp_ID: comp01
      buf0[a][b] = buf0[a][b] + buf1[a][c] * buf2[c][b];
    }
  }
}
