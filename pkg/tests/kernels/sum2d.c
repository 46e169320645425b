#pragma kernel sum2d params(N=8)
long buf0[1];
long buf1[N][N];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp00
    buf0[0] = buf0[0] + buf1[a][b];
  }
}
