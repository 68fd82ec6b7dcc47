#include "essay_audit/cli.hpp"

int main(int argc, char** argv) { return essay_audit::cli::run_cli(argc, argv); }
