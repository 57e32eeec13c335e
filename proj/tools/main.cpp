#include <iostream>
#include <string>
#include <vector>

#include "safereg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return safereg::run_cli(args, std::cout, std::cerr);
}
