#include "cli.hpp"

int main(int argc, char** argv) { return mcoupling::cli::main(argc, argv); }
