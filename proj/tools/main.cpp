#include "clusmfl/cli.hpp"

int main(int argc, char** argv) { return clusmfl::run_cli(argc, argv); }
