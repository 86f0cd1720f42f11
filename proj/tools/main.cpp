#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gcarom/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees the same large buffers every epoch; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  return gcarom::run_cli(argc, argv, std::cout, std::cerr);
}
