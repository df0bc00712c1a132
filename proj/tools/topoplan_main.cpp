#include <cstdio>

int main() {
  std::puts("topoplan: subcommands not wired up yet");
  return 0;
}
