#include "gtnn/cli.hpp"

int main(int argc, char** argv) { return gtnn::cli::run(argc, argv); }
