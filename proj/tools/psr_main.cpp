#include "psr/cli.hpp"

int main(int argc, char** argv) { return psr::run_cli(argc, argv); }
