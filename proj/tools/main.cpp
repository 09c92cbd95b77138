#include "cli.hpp"

#include "stadv/runtime.hpp"

#include <iostream>

int main(int argc, char** argv) {
  stadv::tune_allocator();
  return stadv::cli::run(argc, argv, std::cout, std::cerr);
}
