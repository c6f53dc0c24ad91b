#include "mbias/cli.hpp"

int main(int argc, char** argv) { return mbias::cli::run(argc, argv); }
