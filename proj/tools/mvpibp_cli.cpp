#include <cstdio>

int main() {
  std::puts("mvpibp cli placeholder");
  return 0;
}
