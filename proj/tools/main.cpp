#include "fusenas/cli.hpp"

int main(int argc, char** argv) { return fusenas::cli::run(argc, argv); }
