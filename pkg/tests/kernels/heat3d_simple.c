#pragma kernel heat3d params(N=6)
long buf0[N][N][N];
long buf1[N][N][N];

for (a = 1; a < N - 1; a++) {
  for (b = 1; b < N - 1; b++) {
    for (c = 1; c < N - 1; c++) {
      // comp_ID: comp00
      buf1[a][b][c] = buf0[a-1][b][c] + buf0[a+1][b][c] + buf0[a][b-1][c] + buf0[a][b+1][c] + buf0[a][b][c-1] + buf0[a][b][c+1];
    }
  }
}
