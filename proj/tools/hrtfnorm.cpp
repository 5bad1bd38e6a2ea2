#include <iostream>
#include <string>
#include <vector>

#include "hrtfnorm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return hrtfnorm::run_cli(args, std::cout, std::cerr);
}
