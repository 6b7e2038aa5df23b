#include "stepcount/cli.hpp"

int main(int argc, char** argv) { return stepcount::cli::cli_main(argc, argv); }
