#include "cli.hpp"

int main(int argc, char** argv) { return nextclip::cli::dispatch(argc, argv); }
