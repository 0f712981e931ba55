#include "npresid/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return npresid::cli::run(argc, argv, std::cout, std::cerr); }
