#include "fr3e/cli.hpp"

int main(int argc, char** argv) { return fr3e::run_cli(argc, argv); }
