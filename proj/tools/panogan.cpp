#include <iostream>

#include "panogan/cli.hpp"

int main(int argc, char** argv) { return panogan::cli::run(argc, argv, std::cout, std::cerr); }
