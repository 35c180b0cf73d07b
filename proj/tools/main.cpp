#include <iostream>

#include "cgda/cli.hpp"

int main(int argc, char** argv) { return cgda::cli::run(argc, argv, std::cout, std::cerr); }
