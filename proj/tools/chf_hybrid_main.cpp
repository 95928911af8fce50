#include "chf/cli.hpp"

int main(int argc, char** argv) { return chf::run_cli(argc, argv); }
