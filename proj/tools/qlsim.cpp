#include "qlsim/cli.hpp"

int main(int argc, char **argv) { return qlsim::cli::run(argc, argv); }
