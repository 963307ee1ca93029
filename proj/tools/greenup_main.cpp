#include <iostream>
#include <string>
#include <vector>

#include "greenup/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return greenup::cli_dispatch(args, std::cout, std::cerr);
}
