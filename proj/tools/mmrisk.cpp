#include <iostream>

#include "mmrisk/cli.hpp"

int main(int argc, char** argv) { return mmrisk::cli::run(argc, argv, std::cout, std::cerr); }
