#pragma kernel gemver params(N=7)
long buf0[N][N];
long buf1[N];
long buf2[N];
long buf3[N];
long buf4[N];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp00
    buf0[a][b] = buf0[a][b] + buf1[a] * buf2[b];
  }
}
for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp01
    buf3[a] = buf3[a] + buf0[b][a] * buf4[b];
  }
}
