#include <iostream>
#include <string>
#include <vector>

#include "gnnvault/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gnnvault::run_cli(args, std::cout, std::cerr);
}
