#include "ibacct/cli.hpp"

int main(int argc, char** argv) { return ibacct::cli::run_cli(argc, argv); }
