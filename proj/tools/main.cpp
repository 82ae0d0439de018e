#include <iostream>

#include "vibeharvest/cli.hpp"

int main(int argc, char** argv) {
    return vibeharvest::cli_main(argc, argv, std::cout, std::cerr);
}
