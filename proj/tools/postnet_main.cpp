#include "postnet/cli.hpp"

int main(int argc, char** argv) { return postnet::cli::dispatch(argc, argv); }
