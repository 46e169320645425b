#pragma kernel seidel1d params(N=12)
long buf0[N];

for (a = 1; a < N - 1; a++) {
  // comp_ID: comp00
  buf0[a] = buf0[a-1] + buf0[a] + buf0[a+1];
}
