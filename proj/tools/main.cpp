#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return gpsysid::cli::run(argc, argv, std::cout, std::cerr); }
