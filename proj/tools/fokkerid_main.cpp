#include "fokkerid/cli.hpp"

int main(int argc, char** argv) { return fokkerid::run_cli(argc, argv); }
