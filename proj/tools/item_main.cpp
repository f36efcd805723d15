#include <iostream>
#include <string>
#include <vector>

#include "item/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return item::run_cli(args, std::cout, std::cerr);
}
