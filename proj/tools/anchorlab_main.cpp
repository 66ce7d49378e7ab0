#include "anchorlab/cli.hpp"

int main(int argc, char** argv) { return anchorlab::cli::run(argc, argv); }
