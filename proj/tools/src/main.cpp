#include <iostream>

#include "privprof/cli.hpp"

int main(int argc, char** argv) { return privprof::cli::run(argc, argv, std::cout, std::cerr); }
