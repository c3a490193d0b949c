#include <groundcrit/cli.hpp>

int main(int argc, char** argv) { return groundcrit::run_cli(argc, argv); }
