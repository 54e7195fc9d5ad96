#include "gmix_cli/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gmix::cli::run(argc, argv, std::cout, std::cerr); }
