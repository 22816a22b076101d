#include "otdg/cli.hpp"

int main(int argc, char** argv) { return otdg::cli::run(argc, argv); }
