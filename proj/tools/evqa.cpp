#include "evqa/cli.hpp"

int main(int argc, char** argv) { return evqa::cli::run(argc, argv); }
