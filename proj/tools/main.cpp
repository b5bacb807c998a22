#include <iostream>
#include <string>
#include <vector>

#include "epifnp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return epifnp::run_cli(args, std::cout, std::cerr);
}
