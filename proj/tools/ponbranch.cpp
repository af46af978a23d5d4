#include "ponbranch/cli.hpp"

int main(int argc, char** argv) { return ponbranch::cli::run(argc, argv); }
