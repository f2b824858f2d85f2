#include <oparch/cli.hpp>

int main(int argc, char** argv) { return oparch::cli_main(argc, argv); }
