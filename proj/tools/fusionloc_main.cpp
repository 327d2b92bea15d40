#include <iostream>

#include "fusionloc/cli/cli.hpp"

int main(int argc, char** argv) { return fusionloc::cli::run(argc, argv, std::cout, std::cerr); }
