#include <iostream>

#include "dnetpad_cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dnetpad::cli::run(args, std::cout, std::cerr);
}
