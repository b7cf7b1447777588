#include <iostream>
#include <string>
#include <vector>

#include "t2v/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return t2v::cli::run(args, std::cout, std::cerr);
}
