#include "safeflow/cli.hpp"

int main(int argc, char** argv) { return safeflow::cli::cli_main(argc, argv); }
