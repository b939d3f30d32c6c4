#include <cstdio>

int main() {
  std::puts("acceptance: no checks registered yet");
  return 1;
}
