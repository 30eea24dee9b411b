#include <iostream>

#include "pathtemper/cli.hpp"

int main(int argc, char** argv) { return pathtemper::run_cli(argc, argv, std::cout, std::cerr); }
