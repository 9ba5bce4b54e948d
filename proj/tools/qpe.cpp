#include "qpe/cli.hpp"

int main(int argc, char** argv) { return qpe::run_cli(argc, argv); }
