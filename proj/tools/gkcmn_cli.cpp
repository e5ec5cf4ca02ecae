#include <iostream>

#include "gkcmn/cli/commands.hpp"

int main(int argc, char** argv) { return gkcmn::cli::run_cli(argc, argv, std::cout, std::cerr); }
