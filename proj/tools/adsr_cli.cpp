#include "adsr/cli.hpp"

int main(int argc, char** argv) { return adsr::cli_main(argc, argv); }
