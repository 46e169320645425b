#pragma kernel trisolv params(N=8)
long buf0[N];
long buf1[N];
long buf2[N][N];

for (a = 0; a < N; a++) {
  // comp_ID: comp00
  buf0[a] = buf1[a];
  for (b = 0; b < a; b++) {
    // comp_ID: comp01
    buf0[a] = buf0[a] - buf2[a][b] * buf0[b];
  }
  // comp_ID: comp02
  buf0[a] = buf0[a] / (buf2[a][a] + 1);
}
