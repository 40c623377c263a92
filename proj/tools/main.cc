#include "cli.h"

int main(int argc, char** argv) { return signmap::run_cli(argc, argv); }
