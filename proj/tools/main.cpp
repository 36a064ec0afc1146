#include <iostream>

#include "cli.hpp"
#include "fspm_bridge/logging.hpp"

int main(int argc, char** argv) {
  fspm_bridge::init_logging();
  return fspm_bridge::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
