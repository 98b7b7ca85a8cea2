#include "emv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return emv::run_cli(argc, argv, std::cout, std::cerr); }
