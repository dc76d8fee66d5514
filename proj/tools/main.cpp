#include "groundrag/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return groundrag::cli::run(argc, argv, std::cout, std::cerr);
}
