#include "dpgkit/cli.hpp"

int main(int argc, char** argv) { return dpgkit::cli::main(argc, argv); }
