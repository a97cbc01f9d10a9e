#include "deepaer/cli.hpp"

int main(int argc, char** argv) { return deepaer::cli::run(argc, argv); }
