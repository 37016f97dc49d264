#include <genodcov/cli.hpp>

int main(int argc, char** argv) { return genodcov::cli_main(argc, argv); }
