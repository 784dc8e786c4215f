#include "rlqr/cli.hpp"

int main(int argc, char** argv) { return rlqr::cli::dispatch(argc, argv); }
