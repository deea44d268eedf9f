#include <iostream>

#include "conductor/cli.hpp"

int main(int argc, char** argv) {
    return conductor::cliRun(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
