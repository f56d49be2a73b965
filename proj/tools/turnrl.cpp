#include <iostream>

#include "turnrl/cli.hpp"

int main(int argc, char** argv) {
  return turnrl::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
