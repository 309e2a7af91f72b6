#include <iostream>

#include "bbnn/cli.hpp"

int main(int argc, char** argv) {
  return bbnn::run_cli(argc, argv, std::cout, std::cerr);
}
