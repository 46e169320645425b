#pragma kernel sweep2d params(N=8)
long buf0[N][N];

for (a = 1; a < N; a++) {
  for (b = 1; b < N; b++) {
    // comp_ID: comp00
    buf0[a][b] = buf0[a-1][b] + buf0[a][b-1];
  }
}
