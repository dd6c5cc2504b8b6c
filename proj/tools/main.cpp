#include "gleason/cli.hpp"

int main(int argc, char** argv) { return gleason::cli::run(argc, argv); }
