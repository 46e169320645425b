#pragma kernel jacobi2d params(N=8)
long buf0[N][N];
long buf1[N][N];

for (a = 1; a < N - 1; a++) {
  for (b = 1; b < N - 1; b++) {
    // comp_ID: comp00
    buf1[a][b] = buf0[a][b] + buf0[a-1][b] + buf0[a+1][b] + buf0[a][b-1] + buf0[a][b+1];
  }
}
