#include "commands.hpp"

int main(int argc, char** argv) { return dct::cli::run(argc, argv); }
