#include <iostream>

#include "holofit/cli.hpp"

int main(int argc, char** argv) { return holofit::cli::run(argc, argv, std::cout, std::cerr); }
