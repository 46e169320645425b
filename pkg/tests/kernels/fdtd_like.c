#pragma kernel fdtd params(N=8)
long buf0[N];
long buf1[N];

for (a = 1; a < N; a++) {
  // comp_ID: comp00
  buf0[a] = buf0[a] - buf1[a] + buf1[a-1];
}
for (a = 0; a < N - 1; a++) {
  // comp_ID: comp01
  buf1[a] = buf1[a] - buf0[a+1] + buf0[a];
}
