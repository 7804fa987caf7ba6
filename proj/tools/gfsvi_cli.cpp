#include <iostream>
#include <string>
#include <vector>

#include "gfsvi/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gfsvi::run_cli(args, std::cout, std::cerr);
}
