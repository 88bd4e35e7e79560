#include <iostream>

#include "snftm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return snftm::run(args, std::cout, std::cerr);
}
