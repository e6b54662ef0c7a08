#include <iostream>

#include "judgecal/cli.hpp"

int main(int argc, char** argv) { return judgecal::cli::run(argc, argv, std::cout, std::cerr); }
