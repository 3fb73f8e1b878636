#include "lobdif/cli.hpp"

int main(int argc, char** argv) { return lobdif::cli::run_cli(argc, argv); }
