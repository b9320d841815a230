#include <iostream>

#include "cdrsig/pipeline.hpp"

int main(int argc, char** argv) { return cdrsig::pipeline::run_cli(argc, argv, std::cout, std::cerr); }
