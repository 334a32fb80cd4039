#include "taxoexpan/cli.hpp"

int main(int argc, char** argv) { return taxoexpan::RunCli(argc, argv); }
