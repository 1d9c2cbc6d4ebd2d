#include "ffloor/cli.hpp"

int main(int argc, char** argv) { return ffloor::run_cli(argc, argv); }
