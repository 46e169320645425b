#pragma kernel bicg params(N=6,M=7)
long buf0[M];
long buf1[N];
long buf2[N][M];
long buf3[N];
long buf4[M];

for (a = 0; a < N; a++) {
  for (b = 0; b < M; b++) {
    // comp_ID: comp00
    buf0[b] = buf0[b] + buf3[a] * buf2[a][b];
  }
}
for (a = 0; a < N; a++) {
  for (b = 0; b < M; b++) {
    // comp_ID: comp01
    buf1[a] = buf1[a] + buf2[a][b] * buf4[b];
  }
}
