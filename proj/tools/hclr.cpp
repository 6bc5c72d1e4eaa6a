#include <iostream>

#include "hclr/cli.hpp"

int main(int argc, char** argv) { return hclr::cli_main(argc, argv, std::cout, std::cerr); }
