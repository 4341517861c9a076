#include <iostream>
#include <string>
#include <vector>

#include "pact/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pact::cli::dispatch(args, std::cout, std::cerr);
}
