#include <vector>

#include "topobench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return topobench::run_cli(args);
}
