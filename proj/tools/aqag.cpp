#include <iostream>

#include "aqag/cli.hpp"

int main(int argc, char** argv) { return aqag::cli::run(argc, argv, std::cout, std::cerr); }
