#include "dcharge/cli.hpp"

int main(int argc, char** argv) { return dcharge::run_cli(argc, argv); }
