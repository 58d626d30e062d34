#include "xeml/cli.hpp"

int main(int argc, char** argv) { return xeml::cli::run(argc, argv); }
