// Command-line front end; subcommands are filled in as the library grows.
#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("hmmb: subcommands not wired up yet");
  return 0;
}
