#include <string>
#include <vector>

#include "batm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return batm::cli::run(std::move(args));
}
