#include "stomax/cli.hpp"

int main(int argc, char** argv) { return stomax::run_cli(argc, argv); }
