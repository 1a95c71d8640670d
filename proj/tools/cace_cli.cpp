#include <iostream>

#include "cace/cli.hpp"

int main(int argc, char** argv) { return cace::cli::run(argc, argv, std::cout, std::cerr); }
