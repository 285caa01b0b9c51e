#include "lyap/cli.hpp"

int main(int argc, char** argv) { return lyap::run_cli(argc, argv); }
