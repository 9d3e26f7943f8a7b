#include "taso/harness/cli.hpp"

int main(int argc, char** argv) { return taso::cli_main(argc, argv); }
