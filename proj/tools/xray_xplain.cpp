#include "xrx/cli.hpp"

int main(int argc, char** argv) { return xrx::cli::run(argc, argv); }
