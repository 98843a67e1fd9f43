#include "hdsafebo/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hdsafebo::cli::run_cli(argc, argv, std::cout, std::cerr); }
