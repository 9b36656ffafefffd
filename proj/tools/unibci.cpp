#include "unibci/cli.hpp"

int main(int argc, char** argv) { return unibci::cli_main(argc, argv); }
