#include <iostream>
#include <string>
#include <vector>

#include "mmdtl2/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mmdtl2::cli::run(args, std::cout, std::cerr);
}
