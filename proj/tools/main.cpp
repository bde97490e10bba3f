#include <iostream>

#include "cfa/cli.hpp"

int main(int argc, char** argv) { return cfa::run_cli(argc, argv, std::cout, std::cerr); }
