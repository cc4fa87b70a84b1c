#include <malloc.h>

#include "cten/cli.hpp"

int main(int argc, char** argv) {
  // Large tensor blocks churn every training step; keeping them on the heap
  // instead of per-allocation mmaps removes most of the allocator overhead.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  return cten::cli_main(argc, argv);
}
