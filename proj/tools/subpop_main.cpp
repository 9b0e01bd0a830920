#include "subpop/cli.hpp"

int main(int argc, char **argv) { return subpop::run_cli(argc, argv); }
