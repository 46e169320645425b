#pragma kernel lulike params(N=6)
long buf0[N][N];

for (a = 1; a < N; a++) {
  for (b = 1; b < N; b++) {
    for (c = 0; c < 1; c++) {
      // comp_ID: comp00
      buf0[a][b] = buf0[a][b] - buf0[a][c] * buf0[c][b];
    }
  }
}
