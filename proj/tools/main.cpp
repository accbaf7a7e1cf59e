#include "mome/cli.hpp"

int main(int argc, char** argv) { return mome::dispatch(argc, argv); }
