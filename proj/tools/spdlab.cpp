#include <iostream>

#include "spdlab/cli.hpp"

int main(int argc, char** argv) { return spdlab::run_cli(argc, argv, std::cout, std::cerr); }
