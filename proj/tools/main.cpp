// Copyright (c) 2026 crosspca contributors
#include <cstdio>

int main() {
  std::puts("crosspca: subcommands not wired yet");
  return 0;
}
