#include "synthpqa/cli.hpp"

int main(int argc, char** argv) { return synthpqa::run_cli(argc, argv); }
