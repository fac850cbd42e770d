#include "glim/cli.hpp"

int main(int argc, char** argv) { return glim::cli::run_cli(argc, argv); }
