#include "crashwatch/cli.hpp"

int main(int argc, char** argv) { return crashwatch::cli_main(argc, argv); }
