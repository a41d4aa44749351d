#include "mslabel/cli.hpp"

int main(int argc, char** argv) { return mslabel::cli::run(argc, argv); }
