#include "tailicp/cli.hpp"

int main(int argc, char** argv) { return tailicp::cli::parse_and_dispatch(argc, argv); }
