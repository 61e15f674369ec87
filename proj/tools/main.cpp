#include <iostream>

#include "equacode/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return equacode::dispatch(args, std::cout, std::cerr);
}
