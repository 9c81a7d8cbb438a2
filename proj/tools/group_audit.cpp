#include <iostream>

#include "gaudit/pipeline.hpp"

int main(int argc, char** argv) { return gaudit::run_cli(argc, argv, std::cout, std::cerr); }
