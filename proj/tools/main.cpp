#include "cli.hpp"

int main(int argc, char** argv) { return annostudy::cli::run(argc, argv); }
