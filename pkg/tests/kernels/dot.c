#pragma kernel dot params(N=16)
long buf0[1];
long buf1[N];
long buf2[N];

for (a = 0; a < N; a++) {
  // comp_ID: comp00
  buf0[0] = buf0[0] + buf1[a] * buf2[a];
}
