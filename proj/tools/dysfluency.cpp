#include <iostream>

#include "dysfluency/cli.hpp"

int main(int argc, char** argv) { return dysfluency::cli::dispatch(argc, argv, std::cout, std::cerr); }
