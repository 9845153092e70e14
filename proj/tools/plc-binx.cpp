#include "plcbinx/cli.hpp"

int main(int argc, char** argv) { return plcbinx::cli::run_cli(argc, argv); }
