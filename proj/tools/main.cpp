#include "rmipn/cli.hpp"

int main(int argc, char** argv) { return rmipn::cli::run(argc, argv); }
