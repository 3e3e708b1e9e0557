#include <iostream>

#include "sbi/cli.hpp"

int main(int argc, char** argv) { return sbi::cli::run(argc, argv, std::cout, std::cerr); }
