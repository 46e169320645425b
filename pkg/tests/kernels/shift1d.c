#pragma kernel shift1d params(N=14)
long buf0[N];
long buf1[N];

for (a = 1; a < N - 1; a++) {
  // comp_ID: comp00
  buf0[a] = buf1[a+1] - buf1[a-1];
}
