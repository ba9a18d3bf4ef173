#include "fvdom/cli.hpp"

int main(int argc, char** argv) { return fvdom::cli_main(argc, argv); }
