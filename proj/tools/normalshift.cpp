#include <iostream>

#include "nshift/cli/commands.hpp"

int main(int argc, char** argv) { return nshift::cli::main(argc, argv, std::cout, std::cerr); }
