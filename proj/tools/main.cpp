#include <iostream>

#include "leosched/cli.hpp"

int main(int argc, char** argv) { return leosched::cli::run(argc, argv, std::cout, std::cerr); }
