#include "fvp/cli.hpp"

int main(int argc, char** argv) { return fvp::cli_main(argc, argv); }
