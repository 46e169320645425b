#pragma kernel transpose params(N=8,M=6)
long buf0[M][N];
long buf1[N][M];

for (a = 0; a < M; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp00
    buf0[a][b] = buf1[b][a];
  }
}
