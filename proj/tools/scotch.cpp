#include "scotch/cli.hpp"

int main(int argc, char** argv) { return scotch::cli::main(argc, argv); }
