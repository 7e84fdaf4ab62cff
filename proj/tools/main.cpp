#include <iostream>

#include "skipfuse_cli.hpp"

int main(int argc, char** argv) {
  return skipfuse::cli::run(argc, argv, {std::cout, std::cerr});
}
