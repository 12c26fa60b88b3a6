#include <iostream>

#include "falcon/cli.hpp"

int main(int argc, char** argv) { return falcon::cli::run(argc, argv, std::cout, std::cerr); }
