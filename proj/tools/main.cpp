#include <iostream>
#include <string>
#include <vector>

#include "dgen/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dgen::run_cli(args, std::cout, std::cerr);
}
