#include "mccl/cli.hpp"

int main(int argc, char** argv) { return mccl::run(argc, argv); }
