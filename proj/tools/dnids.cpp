#include <iostream>

#include "dnids/cli.hpp"

int main(int argc, char** argv) { return dnids::cli::run(argc, argv, std::cout, std::cerr); }
