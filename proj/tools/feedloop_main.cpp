#include "feedloop/cli.hpp"

int main(int argc, char** argv) { return feedloop::run_cli(argc, argv); }
