#include "gpgraph/cli.hpp"

int main(int argc, char** argv) { return gpgraph::cli::run(argc, argv); }
