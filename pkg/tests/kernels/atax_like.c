#pragma kernel atax params(N=7,M=6)
long buf0[M];
long buf1[M][N];
long buf2[N];
long buf3[N];

for (a = 0; a < M; a++) {
  // comp_ID: comp00
  buf0[a] = 0;
  for (b = 0; b < N; b++) {
    // comp_ID: comp01
    buf0[a] = buf0[a] + buf1[a][b] * buf2[b];
  }
}
for (a = 0; a < M; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp02
    buf3[b] = buf3[b] + buf1[a][b] * buf0[a];
  }
}
