#include <iostream>
#include <string>
#include <vector>

#include "mosaic/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mosaic::cli::run(args, std::cout, std::cerr);
}
