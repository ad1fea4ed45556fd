#include <iostream>

#include "teachctl/cli.hpp"

int main(int argc, char** argv) { return teach::cli::run(argc, argv, std::cout, std::cerr); }
