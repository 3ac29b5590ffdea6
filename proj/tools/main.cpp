#include <string>
#include <vector>

#include "riskcast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return riskcast::cli::run(args);
}
