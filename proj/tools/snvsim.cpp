#include <iostream>
#include <string>
#include <vector>

#include "snv/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return snv::cli::run(args, std::cout, std::cerr);
}
