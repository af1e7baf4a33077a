#include "rei/cli.hpp"

int main(int argc, char** argv) { return rei::cli::run(argc, argv); }
