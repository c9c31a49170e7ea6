#include <iostream>

#include "spyflow/cli.hpp"

int main(int argc, char** argv) { return spyflow::dispatch(argc, argv, std::cout, std::cerr); }
