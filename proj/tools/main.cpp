#include <iostream>

#include "latentiv/cli.hpp"

int main(int argc, char** argv) {
  return latentiv::cli::run(argc, argv, std::cout, std::cerr);
}
