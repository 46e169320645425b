#pragma kernel mvt params(N=7)
long buf0[N];
long buf1[N];
long buf2[N][N];
long buf3[N];
long buf4[N];

for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp00
    buf0[a] = buf0[a] + buf2[a][b] * buf3[b];
  }
}
for (a = 0; a < N; a++) {
  for (b = 0; b < N; b++) {
    // comp_ID: comp01
    buf1[a] = buf1[a] + buf2[b][a] * buf4[b];
  }
}
