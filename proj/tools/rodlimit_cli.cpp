#include <rodlimit/cli.hpp>

int main(int argc, char** argv) { return rodlimit::run_cli(argc, argv); }
