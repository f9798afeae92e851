#include "pathbench/benchctl/cli.hpp"

int main(int argc, char** argv) { return pathbench::benchctl::run_cli(argc, argv); }
