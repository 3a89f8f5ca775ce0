#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "clickseg/cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("clickseg"));
  const std::vector<std::string> args(argv, argv + argc);
  return clickseg::dispatch(args, std::cout, std::cerr);
}
