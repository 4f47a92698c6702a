#include "zsg/cli.hpp"

int main(int argc, char** argv) { return zsg::cli::run_cli(argc, argv); }
