#include "stabmap/cli.hpp"

int main(int argc, char** argv) { return stabmap::cli::run(argc, argv); }
