#include <string>
#include <vector>

#include "sdr/cli_app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sdr::cli_run(args);
}
