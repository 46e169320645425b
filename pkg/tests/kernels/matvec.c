#pragma kernel matvec params(N=8)
long buf0[N];
long buf1[N][N];
long buf2[N];

for (a = 0; a < N; a++) {
  // comp_ID: comp00
  buf0[a] = 0;
}
for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp01
    buf0[a] = buf0[a] + buf1[a][b] * buf2[b];
  }
}
