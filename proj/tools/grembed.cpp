#include "grembed/harness.hpp"

int main(int argc, char** argv) { return grembed::cli_main(argc, argv); }
