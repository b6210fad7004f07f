#include "commands.hpp"

int main(int argc, char** argv) { return vtseg::cli::run_cli(argc, argv); }
