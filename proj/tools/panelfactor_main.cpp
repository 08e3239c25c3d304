#include "panelfactor/cli.hpp"

int main(int argc, char** argv) { return panelfactor::cli::run_main(argc, argv); }
