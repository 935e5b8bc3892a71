#include <iostream>

#include "oko/cli.hpp"

int main(int argc, char** argv) { return oko::run_cli(argc, argv, std::cout, std::cerr); }
