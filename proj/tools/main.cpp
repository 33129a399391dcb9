#include "hkq/cli.hpp"

int main(int argc, char** argv) { return hkq::run_cli(argc, argv); }
